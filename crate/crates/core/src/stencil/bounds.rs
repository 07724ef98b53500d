use std::fmt;

/// Half-open per-dimension box `[lb, ub)` in logical grid coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Bounds {
    pub lb: Vec<i64>,
    pub ub: Vec<i64>,
}

impl Bounds {
    /// Panics if the box is empty or ranks disagree; use [`Bounds::checked`] for untrusted input.
    pub fn new(lb: Vec<i64>, ub: Vec<i64>) -> Self {
        Self::checked(lb, ub).expect("invalid bounds")
    }

    pub fn checked(lb: Vec<i64>, ub: Vec<i64>) -> Result<Self, String> {
        if lb.len() != ub.len() {
            return Err(format!("bounds rank mismatch: {} lower vs {} upper", lb.len(), ub.len()));
        }
        if lb.is_empty() {
            return Err("bounds must have rank >= 1".into());
        }
        if let Some(d) = (0..lb.len()).find(|&d| lb[d] >= ub[d]) {
            return Err(format!("empty bounds in dimension {d}: [{}, {})", lb[d], ub[d]));
        }
        Ok(Bounds { lb, ub })
    }

    /// `[0, n)` in every dimension.
    pub fn from_shape(shape: &[i64]) -> Self {
        Self::new(vec![0; shape.len()], shape.to_vec())
    }

    pub fn rank(&self) -> usize {
        self.lb.len()
    }

    pub fn shape(&self) -> Vec<i64> {
        self.lb.iter().zip(&self.ub).map(|(l, u)| u - l).collect()
    }

    pub fn num_points(&self) -> i64 {
        self.shape().iter().product()
    }

    pub fn contains(&self, other: &Bounds) -> bool {
        self.rank() == other.rank()
            && (0..self.rank()).all(|d| self.lb[d] <= other.lb[d] && other.ub[d] <= self.ub[d])
    }

    pub fn contains_point(&self, p: &[i64]) -> bool {
        p.len() == self.rank() && (0..self.rank()).all(|d| self.lb[d] <= p[d] && p[d] < self.ub[d])
    }

    pub fn overlaps(&self, other: &Bounds) -> bool {
        self.rank() == other.rank()
            && (0..self.rank()).all(|d| self.lb[d] < other.ub[d] && other.lb[d] < self.ub[d])
    }

    /// Smallest box containing both.
    pub fn hull(&self, other: &Bounds) -> Bounds {
        Bounds {
            lb: self.lb.iter().zip(&other.lb).map(|(a, b)| *a.min(b)).collect(),
            ub: self.ub.iter().zip(&other.ub).map(|(a, b)| *a.max(b)).collect(),
        }
    }

    /// Region read when every point of `self` is accessed with offsets in `extent`.
    pub fn widen(&self, extent: &AccessExtent) -> Bounds {
        Bounds {
            lb: self.lb.iter().zip(&extent.min).map(|(l, m)| l + m).collect(),
            ub: self.ub.iter().zip(&extent.max).map(|(u, m)| u + m).collect(),
        }
    }

    pub fn translate(&self, offset: &[i64]) -> Bounds {
        Bounds {
            lb: self.lb.iter().zip(offset).map(|(l, o)| l + o).collect(),
            ub: self.ub.iter().zip(offset).map(|(u, o)| u + o).collect(),
        }
    }

    /// Row-major linear index of `p` inside this box.
    pub fn linear_index(&self, p: &[i64]) -> usize {
        let mut idx = 0i64;
        for d in 0..self.rank() {
            idx = idx * (self.ub[d] - self.lb[d]) + (p[d] - self.lb[d]);
        }
        idx as usize
    }

    /// All points in row-major order (last dimension fastest).
    pub fn points(&self) -> PointIter<'_> {
        PointIter { bounds: self, next: Some(self.lb.clone()) }
    }
}

impl fmt::Display for Bounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in 0..self.rank() {
            if d > 0 {
                f.write_str("x")?;
            }
            write!(f, "[{},{})", self.lb[d], self.ub[d])?;
        }
        Ok(())
    }
}

pub struct PointIter<'a> {
    bounds: &'a Bounds,
    next: Option<Vec<i64>>,
}

impl Iterator for PointIter<'_> {
    type Item = Vec<i64>;

    fn next(&mut self) -> Option<Vec<i64>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut d = succ.len();
        loop {
            if d == 0 {
                break;
            }
            d -= 1;
            succ[d] += 1;
            if succ[d] < self.bounds.ub[d] {
                self.next = Some(succ);
                break;
            }
            succ[d] = self.bounds.lb[d];
        }
        Some(current)
    }
}

/// Per-dimension minimum and maximum access offset of one apply operand.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AccessExtent {
    pub min: Vec<i64>,
    pub max: Vec<i64>,
}

impl AccessExtent {
    pub fn zero(rank: usize) -> Self {
        AccessExtent { min: vec![0; rank], max: vec![0; rank] }
    }

    pub fn symmetric(radius: &[i64]) -> Self {
        AccessExtent { min: radius.iter().map(|r| -r).collect(), max: radius.to_vec() }
    }

    pub fn rank(&self) -> usize {
        self.min.len()
    }

    pub fn include(&mut self, offset: &[i64]) {
        for (d, &o) in offset.iter().enumerate() {
            self.min[d] = self.min[d].min(o);
            self.max[d] = self.max[d].max(o);
        }
    }

    pub fn union(&self, other: &AccessExtent) -> AccessExtent {
        AccessExtent {
            min: self.min.iter().zip(&other.min).map(|(a, b)| *a.min(b)).collect(),
            max: self.max.iter().zip(&other.max).map(|(a, b)| *a.max(b)).collect(),
        }
    }

    /// Halo depth needed in each dimension: the larger of the two one-sided reaches.
    pub fn halo_width(&self) -> Vec<i64> {
        self.min.iter().zip(&self.max).map(|(lo, hi)| (-lo).max(*hi).max(0)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_are_row_major() {
        let b = Bounds::new(vec![0, 0], vec![3, 2]);
        let pts: Vec<_> = b.points().collect();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0], vec![0, 0]);
        assert_eq!(pts[1], vec![0, 1]);
        assert_eq!(pts[2], vec![1, 0]);
        assert_eq!(pts[5], vec![2, 1]);
        for (i, p) in pts.iter().enumerate() {
            assert_eq!(b.linear_index(p), i);
        }
    }

    #[test]
    fn widen_by_extent() {
        let b = Bounds::new(vec![0], vec![128]);
        let e = AccessExtent { min: vec![-1], max: vec![1] };
        assert_eq!(b.widen(&e), Bounds::new(vec![-1], vec![129]));
    }

    #[test]
    fn rejects_empty() {
        assert!(Bounds::checked(vec![3], vec![3]).is_err());
        assert!(Bounds::checked(vec![0, 0], vec![1]).is_err());
    }
}
