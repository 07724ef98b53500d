use std::fmt;

use crate::ir::attributes::write_int_list;

/// Cartesian rank grid. Ranks map to coordinates row-major, last dimension fastest.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GridTopology {
    pub dims: Vec<usize>,
}

impl GridTopology {
    pub fn new(dims: Vec<usize>) -> Result<Self, String> {
        if dims.is_empty() {
            return Err("grid must have at least one dimension".into());
        }
        if dims.contains(&0) {
            return Err(format!("grid dimensions must be positive, got {dims:?}"));
        }
        Ok(GridTopology { dims })
    }

    /// Parses `2x2`, `4`, `1x4x2`.
    pub fn parse(s: &str) -> Result<Self, String> {
        let dims = s
            .split('x')
            .map(|p| p.trim().parse::<usize>().map_err(|_| format!("invalid grid '{s}'")))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(dims)
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn num_ranks(&self) -> usize {
        self.dims.iter().product()
    }

    /// Number of ranks between consecutive coordinates along `dim`.
    pub fn stride(&self, dim: usize) -> usize {
        self.dims[dim + 1..].iter().product()
    }

    pub fn coord_of(&self, rank: usize) -> Vec<usize> {
        (0..self.rank()).map(|d| (rank / self.stride(d)) % self.dims[d]).collect()
    }

    pub fn rank_of(&self, coord: &[usize]) -> usize {
        coord.iter().enumerate().map(|(d, c)| c * self.stride(d)).sum()
    }

    /// Rank at `coord + offset`, or `None` past the grid edge (no periodic wrap).
    pub fn neighbor_rank(&self, coord: &[usize], offset: &[i64]) -> Option<usize> {
        let mut target = Vec::with_capacity(self.rank());
        for d in 0..self.rank() {
            let c = coord[d] as i64 + offset.get(d).copied().unwrap_or(0);
            if c < 0 || c >= self.dims[d] as i64 {
                return None;
            }
            target.push(c as usize);
        }
        Some(self.rank_of(&target))
    }

    pub fn is_trivial(&self) -> bool {
        self.dims.iter().all(|&d| d == 1)
    }
}

/// Prints the dimensions as `2x2`.
impl fmt::Display for GridTopology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.dims.iter().enumerate() {
            if i > 0 {
                f.write_str("x")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

/// One halo exchange of a `dmp.swap`, in buffer (zero-based) coordinates.
///
/// The region `at .. at + size` is received from the neighbor at relative
/// grid position `to`; the same-sized region displaced by `source_offset`
/// is sent back to it.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ExchangeDecl {
    pub at: Vec<i64>,
    pub size: Vec<i64>,
    pub source_offset: Vec<i64>,
    pub to: Vec<i64>,
}

impl ExchangeDecl {
    pub fn validate(&self) -> Result<(), String> {
        let n = self.at.len();
        if self.size.len() != n || self.source_offset.len() != n {
            return Err("exchange at/size/source offset ranks differ".into());
        }
        if self.size.iter().any(|&s| s < 1) {
            return Err(format!("exchange sizes must be >= 1, got {:?}", self.size));
        }
        if self.to.iter().any(|t| !(-1..=1).contains(t)) {
            return Err(format!("exchange neighbor offsets must be in {{-1,0,1}}, got {:?}", self.to));
        }
        if self.to.iter().all(|&t| t == 0) {
            return Err("exchange neighbor offset must not be all zero".into());
        }
        Ok(())
    }

    pub fn send_at(&self) -> Vec<i64> {
        self.at.iter().zip(&self.source_offset).map(|(a, o)| a + o).collect()
    }

    pub fn num_elements(&self) -> i64 {
        self.size.iter().product()
    }

    /// True when both the receive and the send region lie inside `shape`.
    pub fn fits(&self, shape: &[i64]) -> bool {
        let inside = |origin: &[i64]| {
            origin.len() == shape.len()
                && (0..shape.len()).all(|d| origin[d] >= 0 && origin[d] + self.size[d] <= shape[d])
        };
        inside(&self.at) && inside(&self.send_at())
    }
}

impl fmt::Display for ExchangeDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("#dmp.exchange<at ")?;
        write_int_list(f, &self.at)?;
        f.write_str(" size ")?;
        write_int_list(f, &self.size)?;
        f.write_str(" source offset ")?;
        write_int_list(f, &self.source_offset)?;
        f.write_str(" to ")?;
        write_int_list(f, &self.to)?;
        f.write_str(">")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_mapping() {
        let g = GridTopology::new(vec![2, 4, 4]).unwrap();
        assert_eq!(g.num_ranks(), 32);
        for r in 0..32 {
            assert_eq!(g.rank_of(&g.coord_of(r)), r);
        }
        assert_eq!(g.coord_of(31), vec![1, 3, 3]);
        assert_eq!(g.stride(0), 16);
    }

    #[test]
    fn neighbor_examples() {
        let g = GridTopology::new(vec![2, 2]).unwrap();
        assert_eq!(g.neighbor_rank(&[0, 1], &[0, -1]), Some(0));
        assert_eq!(g.neighbor_rank(&[0, 0], &[0, -1]), None);
        let g = GridTopology::new(vec![2, 4, 4]).unwrap();
        assert_eq!(g.neighbor_rank(&[1, 2, 3], &[0, 0, 1]), None);
        assert_eq!(g.neighbor_rank(&[1, 2, 3], &[0, 1, 0]), Some(16 + 3 * 4 + 3));
    }

    #[test]
    fn neighbor_matches_enumeration() {
        // Independent oracle: enumerate every coordinate and look for the shifted one.
        let g = GridTopology::new(vec![2, 4, 4]).unwrap();
        let all: Vec<Vec<usize>> = (0..g.num_ranks()).map(|r| g.coord_of(r)).collect();
        for coord in &all {
            for d in 0..3 {
                for s in [-1i64, 1] {
                    let mut off = vec![0; 3];
                    off[d] = s;
                    let want = all.iter().position(|c| {
                        (0..3).all(|k| c[k] as i64 == coord[k] as i64 + off[k])
                    });
                    assert_eq!(g.neighbor_rank(coord, &off), want);
                }
            }
        }
    }

    #[test]
    fn grid_parse_and_print() {
        let g = GridTopology::parse("2x2").unwrap();
        assert_eq!(g.to_string(), "2x2");
        assert!(GridTopology::parse("2x0").is_err());
        assert!(GridTopology::parse("two").is_err());
    }

    #[test]
    fn exchange_regions() {
        let e = ExchangeDecl {
            at: vec![4, 0],
            size: vec![100, 4],
            source_offset: vec![0, 4],
            to: vec![0, -1],
        };
        assert!(e.validate().is_ok());
        assert_eq!(e.send_at(), vec![4, 4]);
        assert!(e.fits(&[108, 108]));
        assert!(!e.fits(&[103, 108]));
        assert_eq!(
            e.to_string(),
            "#dmp.exchange<at [4, 0] size [100, 4] source offset [0, 4] to [0, -1]>"
        );
    }
}
