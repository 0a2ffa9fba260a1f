use serde::{Deserialize, Serialize};

use super::schema::ColumnKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComponentKind {
    /// One-hot segment: a category choice or a mixture-mode choice.
    Discrete,
    /// Single scaled offset within the chosen mode.
    Continuous,
}

/// One slot of the mask indicator and the block of encoded dimensions it covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub column: usize,
    pub kind: ComponentKind,
    pub offset: usize,
    pub len: usize,
}

impl Component {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnLayout {
    pub kind: ColumnKind,
    pub discrete_offset: usize,
    pub discrete_len: usize,
    /// Dimension of the continuous scalar, numeric columns only.
    pub continuous: Option<usize>,
    /// Indices into the layout's component list.
    pub components: Vec<usize>,
}

/// Offsets of every column and component inside the encoded vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentLayout {
    pub columns: Vec<ColumnLayout>,
    pub components: Vec<Component>,
    dim: usize,
}

impl ComponentLayout {
    /// Builds the layout from per-column (kind, category-or-mode count).
    pub fn from_sizes(sizes: &[(ColumnKind, usize)]) -> Self {
        let mut columns = Vec::with_capacity(sizes.len());
        let mut components = Vec::new();
        let mut offset = 0;
        for (n, &(kind, d)) in sizes.iter().enumerate() {
            assert!(d >= 1, "column {n} has no categories or modes");
            let mut comp_ids = vec![components.len()];
            components.push(Component {
                column: n,
                kind: ComponentKind::Discrete,
                offset,
                len: d,
            });
            let discrete_offset = offset;
            offset += d;
            let continuous = match kind {
                ColumnKind::Categorical => None,
                ColumnKind::Numeric => {
                    comp_ids.push(components.len());
                    components.push(Component {
                        column: n,
                        kind: ComponentKind::Continuous,
                        offset,
                        len: 1,
                    });
                    offset += 1;
                    Some(offset - 1)
                }
            };
            columns.push(ColumnLayout {
                kind,
                discrete_offset,
                discrete_len: d,
                continuous,
                components: comp_ids,
            });
        }
        Self {
            columns,
            components,
            dim: offset,
        }
    }

    /// Encoded row width `D`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Mask width `D_m`.
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// Number of discrete components `D_d`.
    pub fn n_discrete(&self) -> usize {
        self.discrete_components().count()
    }

    /// Width of the hint vector. Hints span the full encoded row.
    pub fn hint_dim(&self) -> usize {
        self.dim
    }

    /// `Σ D_dn`, the one-hot part of the row.
    pub fn discrete_dim(&self) -> usize {
        self.columns.iter().map(|c| c.discrete_len).sum()
    }

    pub fn discrete_components(&self) -> impl Iterator<Item = (usize, &Component)> + '_ {
        self.components
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ComponentKind::Discrete)
    }

    pub fn continuous_components(&self) -> impl Iterator<Item = (usize, &Component)> + '_ {
        self.components
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ComponentKind::Continuous)
    }

    /// Component index owning each encoded dimension.
    pub fn component_of_dim(&self) -> Vec<usize> {
        let mut out = vec![0; self.dim];
        for (i, c) in self.components.iter().enumerate() {
            for d in c.range() {
                out[d] = i;
            }
        }
        out
    }
}
