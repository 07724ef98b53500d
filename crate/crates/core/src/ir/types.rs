use std::fmt;

use crate::stencil::Bounds;

/// Every type the IR knows about: builtin scalars, buffers, function
/// signatures and the dialect types of stencil, llvm and mpi.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Type {
    I1,
    I32,
    I64,
    Index,
    F32,
    F64,
    MemRef(MemRefType),
    Function(FunctionType),
    Field(FieldType),
    Temp(TempType),
    LlvmPtr,
    MpiRequest,
    MpiStatus,
    MpiDatatype,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MemRefType {
    pub shape: Vec<i64>,
    pub elem: Box<Type>,
}

impl MemRefType {
    pub fn new(shape: Vec<i64>, elem: Type) -> Self {
        MemRefType { shape, elem: Box::new(elem) }
    }

    pub fn num_elements(&self) -> i64 {
        self.shape.iter().product()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FunctionType {
    pub inputs: Vec<Type>,
    pub results: Vec<Type>,
}

/// `!field<[lb,ub]x...xT>`: a buffer addressed in logical grid coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FieldType {
    pub bounds: Bounds,
    pub elem: Box<Type>,
}

impl FieldType {
    pub fn new(bounds: Bounds, elem: Type) -> Self {
        FieldType { bounds, elem: Box::new(elem) }
    }

    /// The zero-based buffer shape backing this field.
    pub fn buffer_type(&self) -> MemRefType {
        MemRefType::new(self.bounds.shape(), (*self.elem).clone())
    }
}

/// `!temp<?x?xT>` or `!temp<[lb,ub]x...xT>`: stencil values with optional bounds.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TempType {
    pub rank: usize,
    pub bounds: Option<Bounds>,
    pub elem: Box<Type>,
}

impl TempType {
    pub fn unknown(rank: usize, elem: Type) -> Self {
        TempType { rank, bounds: None, elem: Box::new(elem) }
    }

    pub fn with_bounds(bounds: Bounds, elem: Type) -> Self {
        TempType { rank: bounds.rank(), bounds: Some(bounds), elem: Box::new(elem) }
    }
}

impl Type {
    pub fn is_float(&self) -> bool {
        matches!(self, Type::F32 | Type::F64)
    }

    pub fn is_integer(&self) -> bool {
        matches!(self, Type::I1 | Type::I32 | Type::I64 | Type::Index)
    }

    pub fn is_scalar(&self) -> bool {
        self.is_float() || self.is_integer()
    }

    /// Bit width of a scalar type; `index` is 64-bit.
    pub fn bit_width(&self) -> Option<u32> {
        match self {
            Type::I1 => Some(1),
            Type::I32 | Type::F32 => Some(32),
            Type::I64 | Type::Index | Type::F64 => Some(64),
            _ => None,
        }
    }

    pub fn byte_size(&self) -> Option<usize> {
        match self {
            Type::I1 => Some(1),
            Type::I32 | Type::F32 => Some(4),
            Type::I64 | Type::Index | Type::F64 => Some(8),
            _ => None,
        }
    }

    /// Element type of buffer-like and stencil types.
    pub fn element_type(&self) -> Option<&Type> {
        match self {
            Type::MemRef(m) => Some(&m.elem),
            Type::Field(f) => Some(&f.elem),
            Type::Temp(t) => Some(&t.elem),
            _ => None,
        }
    }

    /// Shape of the underlying storage for memrefs and fields.
    pub fn buffer_shape(&self) -> Option<Vec<i64>> {
        match self {
            Type::MemRef(m) => Some(m.shape.clone()),
            Type::Field(f) => Some(f.bounds.shape()),
            _ => None,
        }
    }

    pub fn as_memref(&self) -> Option<&MemRefType> {
        match self {
            Type::MemRef(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_field(&self) -> Option<&FieldType> {
        match self {
            Type::Field(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_temp(&self) -> Option<&TempType> {
        match self {
            Type::Temp(t) => Some(t),
            _ => None,
        }
    }
}

fn write_type_list(f: &mut fmt::Formatter<'_>, types: &[Type]) -> fmt::Result {
    for (i, t) in types.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{t}")?;
    }
    Ok(())
}

impl fmt::Display for FunctionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        write_type_list(f, &self.inputs)?;
        f.write_str(") -> ")?;
        match self.results.as_slice() {
            [single] if !matches!(single, Type::Function(_)) => write!(f, "{single}"),
            results => {
                f.write_str("(")?;
                write_type_list(f, results)?;
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::I1 => f.write_str("i1"),
            Type::I32 => f.write_str("i32"),
            Type::I64 => f.write_str("i64"),
            Type::Index => f.write_str("index"),
            Type::F32 => f.write_str("f32"),
            Type::F64 => f.write_str("f64"),
            Type::MemRef(m) => {
                f.write_str("memref<")?;
                for d in &m.shape {
                    write!(f, "{d}x")?;
                }
                write!(f, "{}>", m.elem)
            }
            Type::Function(ft) => write!(f, "{ft}"),
            Type::Field(ft) => {
                f.write_str("!field<")?;
                for d in 0..ft.bounds.rank() {
                    write!(f, "[{},{}]x", ft.bounds.lb[d], ft.bounds.ub[d])?;
                }
                write!(f, "{}>", ft.elem)
            }
            Type::Temp(t) => {
                f.write_str("!temp<")?;
                match &t.bounds {
                    Some(b) => {
                        for d in 0..b.rank() {
                            write!(f, "[{},{}]x", b.lb[d], b.ub[d])?;
                        }
                    }
                    None => {
                        for _ in 0..t.rank {
                            f.write_str("?x")?;
                        }
                    }
                }
                write!(f, "{}>", t.elem)
            }
            Type::LlvmPtr => f.write_str("!llvm.ptr"),
            Type::MpiRequest => f.write_str("!mpi.request"),
            Type::MpiStatus => f.write_str("!mpi.status"),
            Type::MpiDatatype => f.write_str("!mpi.datatype"),
        }
    }
}
