//! Typed flat storage shared by buffers, temps, messages and field data.

use xstencil_core::ir::Type;
use xstencil_core::stencil::Bounds;

use crate::ExecError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Elem {
    F32,
    F64,
    I32,
    I64,
}

impl Elem {
    pub fn of(ty: &Type) -> Option<Elem> {
        match ty {
            Type::F32 => Some(Elem::F32),
            Type::F64 => Some(Elem::F64),
            Type::I32 | Type::I1 => Some(Elem::I32),
            Type::I64 | Type::Index => Some(Elem::I64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Elem::F32 | Elem::I32 => 4,
            Elem::F64 | Elem::I64 => 8,
        }
    }

    pub fn ty(self) -> Type {
        match self {
            Elem::F32 => Type::F32,
            Elem::F64 => Type::F64,
            Elem::I32 => Type::I32,
            Elem::I64 => Type::I64,
        }
    }
}

/// A scalar as the interpreter sees it. Every integer type (i1, i32, i64,
/// index) is held as an `i64` already normalized to its width.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scalar {
    Int(i64),
    F32(f32),
    F64(f64),
}

impl Scalar {
    pub fn as_f64(self) -> f64 {
        match self {
            Scalar::Int(v) => v as f64,
            Scalar::F32(v) => f64::from(v),
            Scalar::F64(v) => v,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Data {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I32(Vec<i32>),
    I64(Vec<i64>),
}

macro_rules! each {
    ($d:expr, $v:ident => $e:expr) => {
        match $d {
            Data::F32($v) => $e,
            Data::F64($v) => $e,
            Data::I32($v) => $e,
            Data::I64($v) => $e,
        }
    };
}

impl Data {
    pub fn zeros(elem: Elem, n: usize) -> Data {
        match elem {
            Elem::F32 => Data::F32(vec![0.0; n]),
            Elem::F64 => Data::F64(vec![0.0; n]),
            Elem::I32 => Data::I32(vec![0; n]),
            Elem::I64 => Data::I64(vec![0; n]),
        }
    }

    pub fn elem(&self) -> Elem {
        match self {
            Data::F32(_) => Elem::F32,
            Data::F64(_) => Elem::F64,
            Data::I32(_) => Elem::I32,
            Data::I64(_) => Elem::I64,
        }
    }

    pub fn len(&self) -> usize {
        each!(self, v => v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Scalar {
        match self {
            Data::F32(v) => Scalar::F32(v[i]),
            Data::F64(v) => Scalar::F64(v[i]),
            Data::I32(v) => Scalar::Int(i64::from(v[i])),
            Data::I64(v) => Scalar::Int(v[i]),
        }
    }

    /// Stores `s`, which must match the element type.
    pub fn set(&mut self, i: usize, s: Scalar) -> Result<(), String> {
        match (self, s) {
            (Data::F32(v), Scalar::F32(x)) => v[i] = x,
            (Data::F64(v), Scalar::F64(x)) => v[i] = x,
            (Data::I32(v), Scalar::Int(x)) => v[i] = x as i32,
            (Data::I64(v), Scalar::Int(x)) => v[i] = x,
            (d, s) => return Err(format!("cannot store {s:?} into a buffer of {:?}", d.elem())),
        }
        Ok(())
    }

    /// Elements `[start, start + n)` as a new vector.
    pub fn slice(&self, start: usize, n: usize) -> Data {
        match self {
            Data::F32(v) => Data::F32(v[start..start + n].to_vec()),
            Data::F64(v) => Data::F64(v[start..start + n].to_vec()),
            Data::I32(v) => Data::I32(v[start..start + n].to_vec()),
            Data::I64(v) => Data::I64(v[start..start + n].to_vec()),
        }
    }

    /// Overwrites elements starting at `start` with `src`.
    pub fn write_at(&mut self, start: usize, src: &Data) -> Result<(), String> {
        match (self, src) {
            (Data::F32(d), Data::F32(s)) => d[start..start + s.len()].copy_from_slice(s),
            (Data::F64(d), Data::F64(s)) => d[start..start + s.len()].copy_from_slice(s),
            (Data::I32(d), Data::I32(s)) => d[start..start + s.len()].copy_from_slice(s),
            (Data::I64(d), Data::I64(s)) => d[start..start + s.len()].copy_from_slice(s),
            (d, s) => return Err(format!("element type mismatch: {:?} into {:?}", s.elem(), d.elem())),
        }
        Ok(())
    }

    /// Bitwise equality (so NaNs with equal payloads compare equal, and
    /// -0.0 differs from 0.0).
    pub fn bitwise_eq(&self, other: &Data) -> bool {
        match (self, other) {
            (Data::F32(a), Data::F32(b)) => a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()),
            (Data::F64(a), Data::F64(b)) => a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()),
            (a, b) => a == b,
        }
    }
}

/// Copies the box of shape `size` at `src_at` in `src` (a row-major array of
/// shape `src_shape`) to `dst_at` in `dst`. Every coordinate must be in
/// range; rows are copied as slices.
pub fn copy_box(
    src: &Data,
    src_shape: &[i64],
    src_at: &[i64],
    dst: &mut Data,
    dst_shape: &[i64],
    dst_at: &[i64],
    size: &[i64],
) -> Result<(), String> {
    let rank = size.len();
    if rank == 0 || size.iter().any(|&s| s <= 0) {
        return Ok(());
    }
    for d in 0..rank {
        if src_at[d] < 0 || src_at[d] + size[d] > src_shape[d] || dst_at[d] < 0 || dst_at[d] + size[d] > dst_shape[d] {
            return Err(format!(
                "box of size {size:?} at {src_at:?} -> {dst_at:?} exceeds shapes {src_shape:?} / {dst_shape:?}"
            ));
        }
    }
    let strides = |shape: &[i64]| {
        let mut s = vec![1i64; rank];
        for d in (0..rank - 1).rev() {
            s[d] = s[d + 1] * shape[d + 1];
        }
        s
    };
    let ss = strides(src_shape);
    let ds = strides(dst_shape);
    let row = size[rank - 1] as usize;
    let mut idx = vec![0i64; rank - 1];
    loop {
        let mut so = src_at[rank - 1];
        let mut doff = dst_at[rank - 1];
        for d in 0..rank - 1 {
            so += (src_at[d] + idx[d]) * ss[d];
            doff += (dst_at[d] + idx[d]) * ds[d];
        }
        let (so, doff) = (so as usize, doff as usize);
        match (src, &mut *dst) {
            (Data::F32(s), Data::F32(d)) => d[doff..doff + row].copy_from_slice(&s[so..so + row]),
            (Data::F64(s), Data::F64(d)) => d[doff..doff + row].copy_from_slice(&s[so..so + row]),
            (Data::I32(s), Data::I32(d)) => d[doff..doff + row].copy_from_slice(&s[so..so + row]),
            (Data::I64(s), Data::I64(d)) => d[doff..doff + row].copy_from_slice(&s[so..so + row]),
            (s, d) => return Err(format!("element type mismatch: {:?} into {:?}", s.elem(), d.elem())),
        }
        // Advance the odometer over all but the innermost dimension.
        let mut d = rank - 1;
        loop {
            if d == 0 {
                return Ok(());
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < size[d] {
                break;
            }
            idx[d] = 0;
        }
    }
}

/// A named array over logical bounds (halo included), row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldData {
    pub name: String,
    pub bounds: Bounds,
    pub data: Data,
}

impl FieldData {
    pub fn new(name: impl Into<String>, bounds: Bounds, data: Data) -> Result<Self, ExecError> {
        if data.len() as i64 != bounds.num_points() {
            return Err(ExecError::Input(format!(
                "field data has {} values but bounds {bounds} cover {} points",
                data.len(),
                bounds.num_points()
            )));
        }
        Ok(FieldData { name: name.into(), bounds, data })
    }

    pub fn zeros(name: impl Into<String>, bounds: Bounds, elem: Elem) -> Self {
        let n = bounds.num_points() as usize;
        FieldData { name: name.into(), bounds, data: Data::zeros(elem, n) }
    }

    /// Fills every point from `f(point)`.
    pub fn from_fn(name: impl Into<String>, bounds: Bounds, elem: Elem, mut f: impl FnMut(&[i64]) -> f64) -> Self {
        let mut out = Self::zeros(name, bounds.clone(), elem);
        for (i, p) in bounds.points().enumerate() {
            let v = f(&p);
            let s = match elem {
                Elem::F32 => Scalar::F32(v as f32),
                Elem::F64 => Scalar::F64(v),
                Elem::I32 | Elem::I64 => Scalar::Int(v as i64),
            };
            out.data.set(i, s).expect("element type matches");
        }
        out
    }

    pub fn elem(&self) -> Elem {
        self.data.elem()
    }

    pub fn get(&self, p: &[i64]) -> Option<Scalar> {
        self.bounds.contains_point(p).then(|| self.data.get(self.bounds.linear_index(p)))
    }

    /// Values over `region` (which must lie inside the bounds), row-major.
    pub fn restrict(&self, region: &Bounds) -> Result<Data, String> {
        if !self.bounds.contains(region) {
            return Err(format!("{region} is not inside {}", self.bounds));
        }
        let mut out = Data::zeros(self.elem(), region.num_points() as usize);
        let at: Vec<i64> = region.lb.iter().zip(&self.bounds.lb).map(|(a, b)| a - b).collect();
        copy_box(&self.data, &self.bounds.shape(), &at, &mut out, &region.shape(), &vec![0; region.rank()], &region.shape())?;
        Ok(out)
    }

    /// Bitwise comparison restricted to `region`.
    pub fn bitwise_eq_on(&self, other: &FieldData, region: &Bounds) -> bool {
        match (self.restrict(region), other.restrict(region)) {
            (Ok(a), Ok(b)) => a.bitwise_eq(&b),
            _ => false,
        }
    }

    /// Largest absolute difference over `region`, for reporting.
    pub fn max_abs_diff(&self, other: &FieldData, region: &Bounds) -> f64 {
        let (Ok(a), Ok(b)) = (self.restrict(region), other.restrict(region)) else { return f64::INFINITY };
        (0..a.len()).map(|i| (a.get(i).as_f64() - b.get(i).as_f64()).abs()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copy_box_moves_rows() {
        let src = Data::F64((0..12).map(f64::from).collect());
        let mut dst = Data::zeros(Elem::F64, 4);
        copy_box(&src, &[3, 4], &[1, 1], &mut dst, &[2, 2], &[0, 0], &[2, 2]).unwrap();
        assert_eq!(dst, Data::F64(vec![5.0, 6.0, 9.0, 10.0]));
        assert!(copy_box(&src, &[3, 4], &[2, 3], &mut dst, &[2, 2], &[0, 0], &[2, 2]).is_err());
    }

    #[test]
    fn bitwise_distinguishes_signed_zero() {
        assert!(!Data::F64(vec![0.0]).bitwise_eq(&Data::F64(vec![-0.0])));
        assert!(Data::F64(vec![f64::NAN]).bitwise_eq(&Data::F64(vec![f64::NAN])));
    }
}
