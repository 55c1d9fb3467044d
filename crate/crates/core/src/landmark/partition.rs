use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the map is split into groups relative to a node. Boundaries are
/// inclusive: a node belongs to every one of its own groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionScheme {
    /// One group covering the whole map.
    #[serde(rename = "p1")]
    Global,
    /// Left and right half-planes, split by the node's vertical axis.
    #[serde(rename = "p2v")]
    HalvesV,
    /// Top and bottom half-planes, split by the node's horizontal axis.
    #[serde(rename = "p2h")]
    HalvesH,
    /// Four axis-aligned quadrants.
    #[serde(rename = "p4")]
    Quadrants,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScanMode {
    Quadrant2D,
    Column1D,
    Row1D,
    Global,
}

/// One directional scan. A `+1` step walks indices upward, so the region of a
/// node is the prefix `≤` along that axis; `−1` gives the suffix `≥`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DmpDirection {
    pub row_step: i8,
    pub col_step: i8,
    pub mode: ScanMode,
}

impl DmpDirection {
    pub const fn quadrant(row_step: i8, col_step: i8) -> Self {
        DmpDirection {
            row_step,
            col_step,
            mode: ScanMode::Quadrant2D,
        }
    }

    pub const fn columns(col_step: i8) -> Self {
        DmpDirection {
            row_step: 1,
            col_step,
            mode: ScanMode::Column1D,
        }
    }

    pub const fn rows(row_step: i8) -> Self {
        DmpDirection {
            row_step,
            col_step: 1,
            mode: ScanMode::Row1D,
        }
    }

    pub const GLOBAL: DmpDirection = DmpDirection {
        row_step: 1,
        col_step: 1,
        mode: ScanMode::Global,
    };

    /// Every direction used by some partition scheme.
    pub fn all() -> Vec<DmpDirection> {
        [
            PartitionScheme::Global,
            PartitionScheme::HalvesV,
            PartitionScheme::HalvesH,
            PartitionScheme::Quadrants,
        ]
        .iter()
        .flat_map(|s| s.directions())
        .collect()
    }

    /// The same scan reflected left-right.
    pub fn mirrored_horizontally(self) -> Self {
        DmpDirection {
            col_step: -self.col_step,
            ..self
        }
    }

    /// The same scan reflected top-bottom.
    pub fn mirrored_vertically(self) -> Self {
        DmpDirection {
            row_step: -self.row_step,
            ..self
        }
    }

    /// Whether `cell` lies in the region this direction pools for `node`.
    pub fn contains(self, node: (usize, usize), cell: (usize, usize)) -> bool {
        let rows_ok = if self.row_step > 0 { cell.0 <= node.0 } else { cell.0 >= node.0 };
        let cols_ok = if self.col_step > 0 { cell.1 <= node.1 } else { cell.1 >= node.1 };
        match self.mode {
            ScanMode::Quadrant2D => rows_ok && cols_ok,
            ScanMode::Column1D => cols_ok,
            ScanMode::Row1D => rows_ok,
            ScanMode::Global => true,
        }
    }

    /// Position of `cell` in this direction's scan order; ties in the max
    /// resolve to the smallest rank.
    pub fn scan_rank(self, (h, w): (usize, usize), cell: (usize, usize)) -> usize {
        let r = if self.row_step > 0 { cell.0 } else { h - 1 - cell.0 };
        let c = if self.col_step > 0 { cell.1 } else { w - 1 - cell.1 };
        match self.mode {
            ScanMode::Quadrant2D => r * w + c,
            ScanMode::Column1D => c * h + cell.0,
            ScanMode::Row1D => r * w + cell.1,
            ScanMode::Global => cell.0 * w + cell.1,
        }
    }
}

impl PartitionScheme {
    pub fn group_count(self) -> usize {
        match self {
            PartitionScheme::Global => 1,
            PartitionScheme::HalvesV | PartitionScheme::HalvesH => 2,
            PartitionScheme::Quadrants => 4,
        }
    }

    /// Scan direction of each group, in group order.
    pub fn directions(self) -> Vec<DmpDirection> {
        match self {
            PartitionScheme::Global => vec![DmpDirection::GLOBAL],
            PartitionScheme::HalvesV => vec![DmpDirection::columns(1), DmpDirection::columns(-1)],
            PartitionScheme::HalvesH => vec![DmpDirection::rows(1), DmpDirection::rows(-1)],
            PartitionScheme::Quadrants => vec![
                DmpDirection::quadrant(1, 1),
                DmpDirection::quadrant(1, -1),
                DmpDirection::quadrant(-1, 1),
                DmpDirection::quadrant(-1, -1),
            ],
        }
    }

    pub fn direction(self, group: usize) -> Result<DmpDirection> {
        self.directions().get(group).copied().ok_or(Error::Index {
            index: group,
            len: self.group_count(),
        })
    }

    /// Membership predicate `cell ∈ G_group(node)`.
    pub fn contains(self, group: usize, node: (usize, usize), cell: (usize, usize)) -> Result<bool> {
        Ok(self.direction(group)?.contains(node, cell))
    }

    pub fn group_names(self) -> &'static [&'static str] {
        match self {
            PartitionScheme::Global => &["all"],
            PartitionScheme::HalvesV => &["left", "right"],
            PartitionScheme::HalvesH => &["top", "bottom"],
            PartitionScheme::Quadrants => &["top-left", "top-right", "bottom-left", "bottom-right"],
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            PartitionScheme::Global => "p1",
            PartitionScheme::HalvesV => "p2v",
            PartitionScheme::HalvesH => "p2h",
            PartitionScheme::Quadrants => "p4",
        }
    }
}

impl std::str::FromStr for PartitionScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p1" => Ok(PartitionScheme::Global),
            "p2v" => Ok(PartitionScheme::HalvesV),
            "p2h" => Ok(PartitionScheme::HalvesH),
            "p4" => Ok(PartitionScheme::Quadrants),
            other => Err(Error::UnknownToken(other.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [PartitionScheme; 4] = [
        PartitionScheme::Global,
        PartitionScheme::HalvesV,
        PartitionScheme::HalvesH,
        PartitionScheme::Quadrants,
    ];

    #[test]
    fn group_counts() {
        let counts: Vec<usize> = ALL.iter().map(|s| s.group_count()).collect();
        assert_eq!(counts, [1, 2, 2, 4]);
        for s in ALL {
            assert_eq!(s.directions().len(), s.group_count());
        }
    }

    #[test]
    fn groups_cover_map_and_include_node() {
        let (h, w) = (5, 6);
        for s in ALL {
            for node in (0..h).flat_map(|i| (0..w).map(move |j| (i, j))) {
                for g in 0..s.group_count() {
                    assert!(s.contains(g, node, node).unwrap(), "{s:?} group {g} excludes node");
                }
                for cell in (0..h).flat_map(|i| (0..w).map(move |j| (i, j))) {
                    let covered = (0..s.group_count()).any(|g| s.contains(g, node, cell).unwrap());
                    assert!(covered, "{s:?} misses {cell:?} for node {node:?}");
                }
            }
        }
        assert!(PartitionScheme::HalvesV.contains(2, (0, 0), (0, 0)).is_err());
    }

    #[test]
    fn scan_rank_is_a_permutation() {
        let (h, w) = (3, 4);
        for d in DmpDirection::all() {
            let mut ranks: Vec<usize> = (0..h)
                .flat_map(|i| (0..w).map(move |j| (i, j)))
                .map(|c| d.scan_rank((h, w), c))
                .collect();
            ranks.sort_unstable();
            assert_eq!(ranks, (0..h * w).collect::<Vec<_>>());
        }
    }

    #[test]
    fn parses_short_names() {
        for s in ALL {
            assert_eq!(s.short_name().parse::<PartitionScheme>().unwrap(), s);
        }
        assert!("p8".parse::<PartitionScheme>().is_err());
    }
}
