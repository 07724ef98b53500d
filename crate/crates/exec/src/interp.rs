//! Executes a compiled [`Program`] for one rank.
//!
//! Fields and memrefs are both plain row-major buffers; a field's logical
//! coordinates are shifted by its lower bound at each load and store.
//! Pointers handed to MPI are `((buffer id + 1) << 32) | byte offset`.

use std::collections::HashMap;
use std::rc::Rc;

use xstencil_core::dmp::GridTopology;
use xstencil_core::mpi::{exchange_tag, AbiTable};
use xstencil_core::stencil::Bounds;

use crate::comm::Comm;
use crate::data::{copy_box, Data, Elem, Scalar};
use crate::program::{Block, FBin, Func, IBin, Kind, MpiOp, Node, Pred, Program, Width};
use crate::ExecError;

#[derive(Clone, Debug)]
pub(crate) struct Buffer {
    pub shape: Vec<i64>,
    pub data: Data,
}

#[derive(Debug)]
pub(crate) struct Temp {
    pub bounds: Bounds,
    pub data: Data,
}

#[derive(Clone, Debug, Default)]
pub(crate) enum Val {
    #[default]
    Unset,
    S(Scalar),
    Buf(u32),
    Temp(Rc<Temp>),
}

enum Flow {
    Next,
    Yield(Vec<Val>),
    Return(Vec<Val>),
}

#[derive(Clone, Copy, Debug)]
enum ReduceKind {
    Sum,
    Prod,
    Max,
    Min,
}

impl ReduceKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "sum" | "MPI_SUM" => Some(Self::Sum),
            "prod" | "MPI_PROD" => Some(Self::Prod),
            "max" | "MPI_MAX" => Some(Self::Max),
            "min" | "MPI_MIN" => Some(Self::Min),
            _ => None,
        }
    }
}

enum Request {
    Done,
    Recv { src: usize, tag: i64, seq: u64, buf: u32, off: usize, count: usize, elem: Elem },
}

/// Reserved tags of collective traffic; user tags are non-negative.
const TAG_REDUCE: i64 = -1;
const TAG_BCAST: i64 = -2;
const TAG_GATHER: i64 = -3;

pub(crate) struct Interp<'p, 'c> {
    prog: &'p Program,
    abi: &'p AbiTable,
    env: Vec<Val>,
    mem: Vec<Option<Buffer>>,
    pub counts: Vec<u64>,
    comm: &'c mut dyn Comm,
    requests: HashMap<i64, Request>,
    next_request: i64,
    recv_seq: HashMap<(usize, i64), u64>,
    swaps_done: u64,
    // State of the stencil.apply being evaluated.
    acc_base: Vec<usize>,
    acc_delta: Vec<isize>,
    acc_temps: Vec<Option<Rc<Temp>>>,
}

fn trap(node: &Node, msg: impl std::fmt::Display) -> ExecError {
    ExecError::Trap { op: node.describe(), message: msg.to_string() }
}

pub(crate) fn encode_ptr(buf: u32, byte_off: usize) -> i64 {
    (((buf as i64) + 1) << 32) | byte_off as i64
}

impl<'p, 'c> Interp<'p, 'c> {
    pub fn new(prog: &'p Program, abi: &'p AbiTable, comm: &'c mut dyn Comm) -> Self {
        Interp {
            prog,
            abi,
            env: vec![Val::Unset; prog.num_values],
            mem: Vec::new(),
            counts: vec![0; prog.stat_names.len()],
            comm,
            requests: HashMap::new(),
            next_request: 1,
            recv_seq: HashMap::new(),
            swaps_done: 0,
            acc_base: Vec::new(),
            acc_delta: vec![0; prog.max_access_slots],
            acc_temps: Vec::new(),
        }
    }

    pub fn alloc(&mut self, shape: Vec<i64>, data: Data) -> u32 {
        self.mem.push(Some(Buffer { shape, data }));
        (self.mem.len() - 1) as u32
    }

    pub fn buffer(&self, id: u32) -> Option<&Buffer> {
        self.mem.get(id as usize).and_then(Option::as_ref)
    }

    /// Runs `func` on `args` and returns its results.
    pub fn call(&mut self, func: &'p Func, args: Vec<Val>) -> Result<Vec<Val>, ExecError> {
        if args.len() != func.body.args.len() {
            return Err(ExecError::Input(format!("@{} takes {} argument(s), got {}", func.name, func.body.args.len(), args.len())));
        }
        for (a, v) in func.body.args.iter().zip(args) {
            self.env[*a as usize] = v;
        }
        match self.block(&func.body)? {
            Flow::Return(v) => Ok(v),
            _ => Ok(Vec::new()),
        }
    }

    fn get(&self, v: u32) -> &Val {
        &self.env[v as usize]
    }

    fn set(&mut self, v: u32, x: Val) {
        self.env[v as usize] = x;
    }

    fn scalar(&self, node: &Node, i: usize) -> Result<Scalar, ExecError> {
        match self.get(node.operands[i]) {
            Val::S(s) => Ok(*s),
            other => Err(trap(node, format!("operand #{i} is not a scalar ({other:?})"))),
        }
    }

    fn int(&self, node: &Node, i: usize) -> Result<i64, ExecError> {
        match self.scalar(node, i)? {
            Scalar::Int(v) => Ok(v),
            s => Err(trap(node, format!("operand #{i} is not an integer ({s:?})"))),
        }
    }

    fn buf_id(&self, node: &Node, i: usize) -> Result<u32, ExecError> {
        match self.get(node.operands[i]) {
            Val::Buf(b) if self.buffer(*b).is_some() => Ok(*b),
            Val::Buf(b) => Err(trap(node, format!("use of deallocated buffer #{b}"))),
            other => Err(trap(node, format!("operand #{i} is not a buffer ({other:?})"))),
        }
    }

    fn temp(&self, node: &Node, i: usize) -> Result<Rc<Temp>, ExecError> {
        match self.get(node.operands[i]) {
            Val::Temp(t) => Ok(t.clone()),
            other => Err(trap(node, format!("operand #{i} is not a temp ({other:?})"))),
        }
    }

    fn block(&mut self, block: &'p Block) -> Result<Flow, ExecError> {
        for node in &block.ops {
            self.counts[node.stat] += 1;
            match self.exec(node)? {
                Flow::Next => {}
                flow => return Ok(flow),
            }
        }
        Ok(Flow::Next)
    }

    fn exec(&mut self, node: &'p Node) -> Result<Flow, ExecError> {
        match &node.kind {
            Kind::Const(s) => self.set(node.results[0], Val::S(*s)),
            Kind::FBin(op) => {
                let r = fbin(*op, self.scalar(node, 0)?, self.scalar(node, 1)?).ok_or_else(|| trap(node, "mismatched float operands"))?;
                self.set(node.results[0], Val::S(r));
            }
            Kind::NegF => {
                let r = match self.scalar(node, 0)? {
                    Scalar::F32(a) => Scalar::F32(-a),
                    Scalar::F64(a) => Scalar::F64(-a),
                    _ => return Err(trap(node, "negf of an integer")),
                };
                self.set(node.results[0], Val::S(r));
            }
            Kind::IBin(op, w) => {
                let (a, b) = (self.int(node, 0)?, self.int(node, 1)?);
                let r = match op {
                    IBin::Add => a.wrapping_add(b),
                    IBin::Sub => a.wrapping_sub(b),
                    IBin::Mul => a.wrapping_mul(b),
                    IBin::DivS | IBin::RemS if b == 0 => return Err(trap(node, "division by zero")),
                    IBin::DivS => a.wrapping_div(b),
                    IBin::RemS => a.wrapping_rem(b),
                    IBin::And => a & b,
                    IBin::Or => a | b,
                };
                self.set(node.results[0], Val::S(Scalar::Int(w.wrap(r))));
            }
            Kind::CmpI(p, w) => {
                let (a, b) = (self.int(node, 0)?, self.int(node, 1)?);
                let unsigned = |x: i64| match w {
                    Width::I1 => x as u64 & 1,
                    Width::I32 => u64::from(x as u32),
                    Width::I64 => x as u64,
                };
                let r = match p {
                    Pred::Eq => a == b,
                    Pred::Ne => a != b,
                    Pred::Slt => a < b,
                    Pred::Sle => a <= b,
                    Pred::Sgt => a > b,
                    Pred::Sge => a >= b,
                    Pred::Ult => unsigned(a) < unsigned(b),
                    Pred::Ule => unsigned(a) <= unsigned(b),
                    Pred::Ugt => unsigned(a) > unsigned(b),
                    Pred::Uge => unsigned(a) >= unsigned(b),
                };
                self.set(node.results[0], Val::S(Scalar::Int(i64::from(r))));
            }
            Kind::Select => {
                let c = self.int(node, 0)?;
                let v = self.get(node.operands[if c != 0 { 1 } else { 2 }]).clone();
                self.set(node.results[0], v);
            }
            Kind::IndexCast(w) => {
                let v = self.int(node, 0)?;
                self.set(node.results[0], Val::S(Scalar::Int(w.wrap(v))));
            }
            Kind::SiToFp(e) => {
                let v = self.int(node, 0)?;
                let r = match e {
                    Elem::F32 => Scalar::F32(v as f32),
                    _ => Scalar::F64(v as f64),
                };
                self.set(node.results[0], Val::S(r));
            }
            Kind::Cast | Kind::IntToPtr => {
                let v = self.get(node.operands[0]).clone();
                self.set(node.results[0], v);
            }
            Kind::For => self.for_loop(node)?,
            Kind::If => {
                let c = self.int(node, 0)?;
                let region = if c != 0 { node.regions.first() } else { node.regions.get(1) };
                if let Some(r) = region {
                    if let Flow::Return(v) = self.block(r)? {
                        return Ok(Flow::Return(v));
                    }
                }
            }
            Kind::Yield | Kind::SReturn => return Ok(Flow::Yield(self.operand_vals(node))),
            Kind::Return => return Ok(Flow::Return(self.operand_vals(node))),
            Kind::Call(target, callee) => {
                let args = self.operand_vals(node);
                let results = match target {
                    Some(i) => {
                        let f = &self.prog.funcs[*i];
                        // Callee frames get a fresh environment so recursion works.
                        let saved = std::mem::replace(&mut self.env, vec![Val::Unset; self.prog.num_values]);
                        let r = self.call(f, args);
                        self.env = saved;
                        r?
                    }
                    None => {
                        self.external(node, callee, &args)?;
                        Vec::new()
                    }
                };
                for (r, v) in node.results.iter().zip(results) {
                    self.set(*r, v);
                }
            }
            Kind::Alloc(shape, elem) => {
                let n = shape.iter().product::<i64>() as usize;
                let id = self.alloc(shape.clone(), Data::zeros(*elem, n));
                self.set(node.results[0], Val::Buf(id));
            }
            Kind::Dealloc => {
                let id = self.buf_id(node, 0)?;
                self.mem[id as usize] = None;
            }
            Kind::MLoad => {
                let id = self.buf_id(node, 0)?;
                let i = self.linear(node, id, 1)?;
                let s = self.mem[id as usize].as_ref().unwrap().data.get(i);
                self.set(node.results[0], Val::S(s));
            }
            Kind::MStore => {
                let s = self.scalar(node, 0)?;
                let id = self.buf_id(node, 1)?;
                let i = self.linear(node, id, 2)?;
                self.mem[id as usize].as_mut().unwrap().data.set(i, s).map_err(|e| trap(node, e))?;
            }
            Kind::ExtractPtr => {
                let id = self.buf_id(node, 0)?;
                self.set(node.results[0], Val::S(Scalar::Int(encode_ptr(id, 0))));
            }
            Kind::SLoad { field_lb, bounds } => {
                let id = self.buf_id(node, 0)?;
                let buf = self.mem[id as usize].as_ref().unwrap();
                let at: Vec<i64> = bounds.lb.iter().zip(field_lb).map(|(a, b)| a - b).collect();
                let shape = bounds.shape();
                let mut data = Data::zeros(buf.data.elem(), bounds.num_points() as usize);
                copy_box(&buf.data, &buf.shape, &at, &mut data, &shape, &vec![0; shape.len()], &shape)
                    .map_err(|e| trap(node, format!("load of {bounds} outside the field: {e}")))?;
                self.set(node.results[0], Val::Temp(Rc::new(Temp { bounds: bounds.clone(), data })));
            }
            Kind::SStore { field_lb, bounds } => {
                let t = self.temp(node, 0)?;
                let id = self.buf_id(node, 1)?;
                if !t.bounds.contains(bounds) {
                    return Err(trap(node, format!("store range {bounds} exceeds the temp bounds {}", t.bounds)));
                }
                let src_at: Vec<i64> = bounds.lb.iter().zip(&t.bounds.lb).map(|(a, b)| a - b).collect();
                let dst_at: Vec<i64> = bounds.lb.iter().zip(field_lb).map(|(a, b)| a - b).collect();
                let buf = self.mem[id as usize].as_mut().unwrap();
                copy_box(&t.data, &t.bounds.shape(), &src_at, &mut buf.data, &buf.shape, &dst_at, &bounds.shape())
                    .map_err(|e| trap(node, format!("store of {bounds} outside the field: {e}")))?;
            }
            Kind::Apply { domain, elems } => self.apply(node, domain, elems)?,
            Kind::Access { arg, slot, .. } => {
                let t = self.acc_temps[*arg].as_ref().ok_or_else(|| trap(node, "access of a scalar argument"))?;
                let i = self.acc_base[*arg] as isize + self.acc_delta[*slot];
                let s = t.data.get(i as usize);
                self.set(node.results[0], Val::S(s));
            }
            Kind::Swap { grid, exchanges } => self.swap(node, grid, exchanges)?,
            Kind::Mpi(op, attr) => self.mpi(node, *op, attr.as_deref())?,
            Kind::Unsupported => return Err(trap(node, "operation is not supported by the interpreter")),
        }
        Ok(Flow::Next)
    }

    fn operand_vals(&self, node: &Node) -> Vec<Val> {
        node.operands.iter().map(|v| self.get(*v).clone()).collect()
    }

    fn linear(&self, node: &Node, id: u32, first: usize) -> Result<usize, ExecError> {
        let buf = self.mem[id as usize].as_ref().unwrap();
        let idx = &node.operands[first..];
        if idx.len() != buf.shape.len() {
            return Err(trap(node, format!("{} indices for a rank-{} buffer", idx.len(), buf.shape.len())));
        }
        let mut lin = 0i64;
        for (d, v) in idx.iter().enumerate() {
            let i = match self.get(*v) {
                Val::S(Scalar::Int(i)) => *i,
                _ => return Err(trap(node, "non-integer index")),
            };
            if i < 0 || i >= buf.shape[d] {
                return Err(trap(node, format!("index {i} out of bounds for dimension {d} of size {}", buf.shape[d])));
            }
            lin = lin * buf.shape[d] + i;
        }
        Ok(lin as usize)
    }

    fn for_loop(&mut self, node: &'p Node) -> Result<(), ExecError> {
        let (lo, hi, step) = (self.int(node, 0)?, self.int(node, 1)?, self.int(node, 2)?);
        if step <= 0 {
            return Err(trap(node, format!("loop step must be positive, got {step}")));
        }
        let body = &node.regions[0];
        let mut carried: Vec<Val> = node.operands[3..].iter().map(|v| self.get(*v).clone()).collect();
        let mut i = lo;
        while i < hi {
            self.set(body.args[0], Val::S(Scalar::Int(i)));
            for (a, v) in body.args[1..].iter().zip(carried.drain(..)) {
                self.set(*a, v);
            }
            match self.block(body)? {
                Flow::Yield(v) => carried = v,
                Flow::Next if node.results.is_empty() => {}
                Flow::Next => return Err(trap(node, "loop body with iter_args must end in scf.yield")),
                Flow::Return(_) => return Err(trap(node, "func.return inside a loop body")),
            }
            i += step;
        }
        for (r, v) in node.results.iter().zip(carried) {
            self.set(*r, v);
        }
        Ok(())
    }

    fn apply(&mut self, node: &'p Node, domain: &Bounds, elems: &[Elem]) -> Result<(), ExecError> {
        let body = &node.regions[0];
        let rank = domain.rank();
        let mut temps: Vec<Option<Rc<Temp>>> = Vec::with_capacity(node.operands.len());
        for (i, (a, v)) in body.args.iter().zip(&node.operands).enumerate() {
            match self.get(*v).clone() {
                Val::Temp(t) => {
                    if t.bounds.rank() != rank {
                        return Err(trap(node, format!("operand #{i} has rank {}, the domain {domain}", t.bounds.rank())));
                    }
                    temps.push(Some(t));
                }
                other => {
                    self.set(*a, other);
                    temps.push(None);
                }
            }
        }
        // Precompute the linear delta of every access and check that all
        // accesses stay inside their temp over the whole domain.
        let mut delta = std::mem::take(&mut self.acc_delta);
        let mut check = Ok(());
        walk_accesses(body, &mut |acc: &Node| {
            if let Kind::Access { arg, offset, slot } = &acc.kind {
                let Some(t) = &temps[*arg] else { return };
                let shifted = domain.translate(offset);
                if !t.bounds.contains(&shifted) {
                    check = Err(trap(acc, format!("access {offset:?} over {domain} leaves the temp bounds {}", t.bounds)));
                    return;
                }
                let shape = t.bounds.shape();
                let mut stride = 1isize;
                let mut d_lin = 0isize;
                for d in (0..rank).rev() {
                    d_lin += offset[d] as isize * stride;
                    stride *= shape[d] as isize;
                }
                delta[*slot] = d_lin;
            }
        });
        self.acc_delta = delta;
        check?;

        let n = domain.num_points() as usize;
        let mut outs: Vec<Data> = elems.iter().map(|e| Data::zeros(*e, n)).collect();
        let saved_temps = std::mem::replace(&mut self.acc_temps, temps);
        let saved_base = std::mem::replace(&mut self.acc_base, vec![0; node.operands.len()]);
        let result = (|| {
            if n == 0 {
                return Ok(());
            }
            let mut p = domain.lb.clone();
            for k in 0..n {
                for (i, t) in self.acc_temps.iter().enumerate() {
                    if let Some(t) = t {
                        self.acc_base[i] = t.bounds.linear_index(&p);
                    }
                }
                match self.block(body)? {
                    Flow::Yield(vals) => {
                        if vals.len() != outs.len() {
                            return Err(trap(node, format!("stencil.return yields {} value(s) for {} result(s)", vals.len(), outs.len())));
                        }
                        for (o, v) in outs.iter_mut().zip(vals) {
                            let Val::S(s) = v else { return Err(trap(node, "stencil.return of a non-scalar")) };
                            o.set(k, s).map_err(|e| trap(node, e))?;
                        }
                    }
                    _ => return Err(trap(node, "stencil.apply body did not return")),
                }
                for d in (0..rank).rev() {
                    p[d] += 1;
                    if p[d] < domain.ub[d] {
                        break;
                    }
                    p[d] = domain.lb[d];
                }
            }
            Ok(())
        })();
        self.acc_temps = saved_temps;
        self.acc_base = saved_base;
        result?;
        for (r, data) in node.results.iter().zip(outs) {
            self.set(*r, Val::Temp(Rc::new(Temp { bounds: domain.clone(), data })));
        }
        Ok(())
    }

    /// Native halo exchange: pack and send towards every existing neighbor,
    /// then receive and unpack.
    fn swap(&mut self, node: &Node, grid: &GridTopology, exchanges: &[xstencil_core::dmp::ExchangeDecl]) -> Result<(), ExecError> {
        let id = self.buf_id(node, 0)?;
        let size = self.comm.size();
        if grid.num_ranks() != size {
            return Err(trap(node, format!("grid {grid} needs {} ranks, running on {size}", grid.num_ranks())));
        }
        let ordinal = self.swaps_done as usize;
        self.swaps_done += 1;
        let coord = grid.coord_of(self.comm.rank());
        for e in exchanges {
            let Some(peer) = grid.neighbor_rank(&coord, &e.to) else { continue };
            let buf = self.mem[id as usize].as_ref().unwrap();
            let mut packed = Data::zeros(buf.data.elem(), e.num_elements() as usize);
            copy_box(&buf.data, &buf.shape, &e.send_at(), &mut packed, &e.size, &vec![0; e.size.len()], &e.size).map_err(|m| trap(node, m))?;
            self.comm.send(peer, exchange_tag(ordinal, &e.to), packed)?;
        }
        for e in exchanges {
            let Some(peer) = grid.neighbor_rank(&coord, &e.to) else { continue };
            let back: Vec<i64> = e.to.iter().map(|o| -o).collect();
            let tag = exchange_tag(ordinal, &back);
            let seq = self.next_seq(peer, tag);
            let what = format!("{} (halo from rank {peer}, tag {tag})", node.describe());
            let data = self.comm.recv(peer, tag, seq, &what)?;
            let buf = self.mem[id as usize].as_mut().unwrap();
            copy_box(&data, &e.size, &vec![0; e.size.len()], &mut buf.data, &buf.shape, &e.at, &e.size).map_err(|m| trap(node, m))?;
        }
        Ok(())
    }

    fn next_seq(&mut self, src: usize, tag: i64) -> u64 {
        let s = self.recv_seq.entry((src, tag)).or_insert(0);
        *s += 1;
        *s - 1
    }

    // ---- message passing shared by the mpi dialect and the C interface ----

    fn abi_value(&self, name: &str) -> i64 {
        self.abi.get_i32(name).unwrap_or(i64::MIN)
    }

    fn decode_ptr(&self, node: &Node, ptr: i64) -> Result<(u32, usize), ExecError> {
        let id = (ptr >> 32) - 1;
        let off = (ptr & 0xffff_ffff) as usize;
        if id < 0 || self.buffer(id as u32).is_none() {
            return Err(trap(node, format!("invalid pointer {ptr:#x}")));
        }
        Ok((id as u32, off))
    }

    fn dtype(&self, node: &Node, code: i64) -> Result<Elem, ExecError> {
        match self.abi.lookup(code, xstencil_core::mpi::abi::DATATYPES) {
            Some("MPI_DOUBLE") => Ok(Elem::F64),
            Some("MPI_FLOAT") => Ok(Elem::F32),
            Some("MPI_INT") => Ok(Elem::I32),
            Some("MPI_LONG_LONG") => Ok(Elem::I64),
            _ => Err(trap(node, format!("unknown MPI datatype {code:#x}"))),
        }
    }

    /// Resolves `(ptr, count, datatype)` to a buffer slice.
    fn region(&self, node: &Node, ptr: i64, count: i64, dtype: i64) -> Result<(u32, usize, usize, Elem), ExecError> {
        let (id, off) = self.decode_ptr(node, ptr)?;
        let elem = self.dtype(node, dtype)?;
        let buf = self.buffer(id).unwrap();
        if buf.data.elem() != elem {
            return Err(trap(node, format!("datatype {elem:?} does not match a buffer of {:?}", buf.data.elem())));
        }
        if off % elem.size() != 0 || count < 0 {
            return Err(trap(node, format!("misaligned pointer or negative count ({off}, {count})")));
        }
        let start = off / elem.size();
        if start + count as usize > buf.data.len() {
            return Err(trap(node, format!("{count} element(s) at offset {start} overrun a buffer of {}", buf.data.len())));
        }
        Ok((id, start, count as usize, elem))
    }

    fn peer(&self, node: &Node, p: i64) -> Result<Option<usize>, ExecError> {
        if p == self.abi_value("MPI_PROC_NULL") {
            return Ok(None);
        }
        if p < 0 || p as usize >= self.comm.size() {
            return Err(trap(node, format!("rank {p} is outside the communicator of size {}", self.comm.size())));
        }
        Ok(Some(p as usize))
    }

    fn check_tag(node: &Node, tag: i64) -> Result<(), ExecError> {
        if tag < 0 {
            return Err(trap(node, format!("negative tag {tag}")));
        }
        Ok(())
    }

    fn isend(&mut self, node: &Node, ptr: i64, count: i64, dtype: i64, dest: i64, tag: i64) -> Result<i64, ExecError> {
        Self::check_tag(node, tag)?;
        let (id, start, n, _) = self.region(node, ptr, count, dtype)?;
        if let Some(dest) = self.peer(node, dest)? {
            let data = self.buffer(id).unwrap().data.slice(start, n);
            self.comm.send(dest, tag, data)?;
        }
        Ok(self.new_request(Request::Done))
    }

    fn irecv(&mut self, node: &Node, ptr: i64, count: i64, dtype: i64, src: i64, tag: i64) -> Result<i64, ExecError> {
        Self::check_tag(node, tag)?;
        let (buf, off, count, elem) = self.region(node, ptr, count, dtype)?;
        let req = match self.peer(node, src)? {
            None => Request::Done,
            Some(src) => Request::Recv { src, tag, seq: self.next_seq(src, tag), buf, off, count, elem },
        };
        Ok(self.new_request(req))
    }

    fn new_request(&mut self, r: Request) -> i64 {
        let h = self.next_request;
        self.next_request += 1;
        self.requests.insert(h, r);
        h
    }

    /// Completes request `h`, blocking if needed; `block = false` only polls.
    fn complete(&mut self, node: &Node, h: i64, block: bool) -> Result<bool, ExecError> {
        let Some(req) = self.requests.get(&h) else {
            return Err(trap(node, format!("request {h} was already completed or never started")));
        };
        if let Request::Recv { src, tag, seq, buf, off, count, elem } = *req {
            let data = if block {
                let what = format!("{} (message from rank {src}, tag {tag})", node.describe());
                self.comm.recv(src, tag, seq, &what)?
            } else {
                match self.comm.try_recv(src, tag, seq)? {
                    Some(d) => d,
                    None => return Ok(false),
                }
            };
            if data.elem() != elem || data.len() > count {
                return Err(trap(node, format!("received {} {:?} element(s) into room for {count} {elem:?}", data.len(), data.elem())));
            }
            let b = self.mem[buf as usize].as_mut().ok_or_else(|| trap(node, "receive buffer was deallocated"))?;
            b.data.write_at(off, &data).map_err(|e| trap(node, e))?;
        }
        self.requests.remove(&h);
        Ok(true)
    }

    #[allow(clippy::too_many_arguments)]
    fn reduce(&mut self, node: &Node, send: i64, recv: i64, count: i64, dtype: i64, kind: ReduceKind, all: bool) -> Result<(), ExecError> {
        let (sid, s0, n, _) = self.region(node, send, count, dtype)?;
        let mine = self.buffer(sid).unwrap().data.slice(s0, n);
        let rank = self.comm.rank();
        let size = self.comm.size();
        let result = if rank == 0 {
            let mut acc = mine;
            for r in 1..size {
                let seq = self.next_seq(r, TAG_REDUCE);
                let what = format!("{} (reduction contribution of rank {r})", node.describe());
                let other = self.comm.recv(r, TAG_REDUCE, seq, &what)?;
                acc = combine(&acc, &other, kind).ok_or_else(|| trap(node, "reduction over mismatched data"))?;
            }
            Some(acc)
        } else {
            self.comm.send(0, TAG_REDUCE, mine)?;
            None
        };
        let result = if all { Some(self.broadcast(node, result)?) } else { result };
        if let Some(data) = result {
            let (rid, r0, _, _) = self.region(node, recv, count, dtype)?;
            self.mem[rid as usize].as_mut().unwrap().data.write_at(r0, &data).map_err(|e| trap(node, e))?;
        }
        Ok(())
    }

    /// Root 0 sends `data` to every rank; everyone returns the root's data.
    fn broadcast(&mut self, node: &Node, data: Option<Data>) -> Result<Data, ExecError> {
        if self.comm.rank() == 0 {
            let data = data.expect("root has data");
            for r in 1..self.comm.size() {
                self.comm.send(r, TAG_BCAST, data.clone())?;
            }
            Ok(data)
        } else {
            let seq = self.next_seq(0, TAG_BCAST);
            let what = format!("{} (broadcast from rank 0)", node.describe());
            self.comm.recv(0, TAG_BCAST, seq, &what)
        }
    }

    fn bcast(&mut self, node: &Node, ptr: i64, count: i64, dtype: i64) -> Result<(), ExecError> {
        let (id, start, n, _) = self.region(node, ptr, count, dtype)?;
        let mine = (self.comm.rank() == 0).then(|| self.buffer(id).unwrap().data.slice(start, n));
        let data = self.broadcast(node, mine)?;
        self.mem[id as usize].as_mut().unwrap().data.write_at(start, &data).map_err(|e| trap(node, e))
    }

    fn gather(&mut self, node: &Node, send: i64, recv: i64, count: i64, dtype: i64) -> Result<(), ExecError> {
        let (sid, s0, n, _) = self.region(node, send, count, dtype)?;
        let mine = self.buffer(sid).unwrap().data.slice(s0, n);
        if self.comm.rank() != 0 {
            return self.comm.send(0, TAG_GATHER, mine);
        }
        let size = self.comm.size() as i64;
        let (rid, r0, _, _) = self.region(node, recv, count * size, dtype)?;
        self.mem[rid as usize].as_mut().unwrap().data.write_at(r0, &mine).map_err(|e| trap(node, e))?;
        for r in 1..size as usize {
            let seq = self.next_seq(r, TAG_GATHER);
            let what = format!("{} (gather contribution of rank {r})", node.describe());
            let d = self.comm.recv(r, TAG_GATHER, seq, &what)?;
            self.mem[rid as usize].as_mut().unwrap().data.write_at(r0 + r * n, &d).map_err(|e| trap(node, e))?;
        }
        Ok(())
    }

    fn mpi(&mut self, node: &Node, op: MpiOp, attr: Option<&str>) -> Result<(), ExecError> {
        let int = |me: &Self, i| me.int(node, i);
        match op {
            MpiOp::Init | MpiOp::Finalize => {}
            MpiOp::CommRank => self.set(node.results[0], Val::S(Scalar::Int(self.comm.rank() as i64))),
            MpiOp::CommSize => self.set(node.results[0], Val::S(Scalar::Int(self.comm.size() as i64))),
            MpiOp::Unwrap => {
                let id = self.buf_id(node, 0)?;
                let buf = self.buffer(id).unwrap();
                let name = match buf.data.elem() {
                    Elem::F64 => "MPI_DOUBLE",
                    Elem::F32 => "MPI_FLOAT",
                    Elem::I32 => "MPI_INT",
                    Elem::I64 => "MPI_LONG_LONG",
                };
                let count = buf.data.len() as i64;
                self.set(node.results[0], Val::S(Scalar::Int(encode_ptr(id, 0))));
                self.set(node.results[1], Val::S(Scalar::Int(count)));
                self.set(node.results[2], Val::S(Scalar::Int(self.abi_value(name))));
            }
            MpiOp::Send | MpiOp::Isend => {
                let h = self.isend(node, int(self, 0)?, int(self, 1)?, int(self, 2)?, int(self, 3)?, int(self, 4)?)?;
                if op == MpiOp::Isend {
                    self.set(node.results[0], Val::S(Scalar::Int(h)));
                } else {
                    self.complete(node, h, true)?;
                }
            }
            MpiOp::Recv | MpiOp::Irecv => {
                let h = self.irecv(node, int(self, 0)?, int(self, 1)?, int(self, 2)?, int(self, 3)?, int(self, 4)?)?;
                if op == MpiOp::Irecv {
                    self.set(node.results[0], Val::S(Scalar::Int(h)));
                } else {
                    self.complete(node, h, true)?;
                }
            }
            MpiOp::Wait => {
                self.complete(node, int(self, 0)?, true)?;
            }
            MpiOp::Test => {
                let done = self.complete(node, int(self, 0)?, false)?;
                self.set(node.results[0], Val::S(Scalar::Int(i64::from(done))));
            }
            MpiOp::Waitall => {
                for i in 0..node.operands.len() {
                    self.complete(node, int(self, i)?, true)?;
                }
            }
            MpiOp::Reduce | MpiOp::Allreduce => {
                let kind = attr.and_then(ReduceKind::parse).ok_or_else(|| trap(node, "missing reduction kind"))?;
                self.reduce(node, int(self, 0)?, int(self, 1)?, int(self, 2)?, int(self, 3)?, kind, op == MpiOp::Allreduce)?;
            }
            MpiOp::Bcast => self.bcast(node, int(self, 0)?, int(self, 1)?, int(self, 2)?)?,
            MpiOp::Gather => self.gather(node, int(self, 0)?, int(self, 1)?, int(self, 2)?, int(self, 3)?)?,
        }
        self.comm.yield_point()
    }

    // ---- the C interface ----

    fn read_i32(&self, node: &Node, ptr: i64) -> Result<i64, ExecError> {
        let (id, off) = self.decode_ptr(node, ptr)?;
        match &self.buffer(id).unwrap().data {
            Data::I32(v) if off % 4 == 0 && off / 4 < v.len() => Ok(i64::from(v[off / 4])),
            _ => Err(trap(node, format!("pointer {ptr:#x} does not address an i32"))),
        }
    }

    fn write_i32(&mut self, node: &Node, ptr: i64, value: i64) -> Result<(), ExecError> {
        let (id, off) = self.decode_ptr(node, ptr)?;
        match &mut self.mem[id as usize].as_mut().unwrap().data {
            Data::I32(v) if off % 4 == 0 && off / 4 < v.len() => {
                v[off / 4] = value as i32;
                Ok(())
            }
            _ => Err(trap(node, format!("pointer {ptr:#x} does not address an i32"))),
        }
    }

    fn check_comm(&self, node: &Node, c: i64) -> Result<(), ExecError> {
        if c != self.abi_value("MPI_COMM_WORLD") {
            return Err(trap(node, format!("unknown communicator {c:#x}")));
        }
        Ok(())
    }

    fn reduce_op(&self, node: &Node, code: i64) -> Result<ReduceKind, ExecError> {
        let names: Vec<&str> = xstencil_core::mpi::abi::REDUCTION_OPS.iter().map(|(_, n)| *n).collect();
        self.abi.lookup(code, &names).and_then(ReduceKind::parse).ok_or_else(|| trap(node, format!("unknown reduction operator {code:#x}")))
    }

    /// Completes the request stored at `slot` and resets the slot.
    fn complete_slot(&mut self, node: &Node, slot: i64, block: bool) -> Result<bool, ExecError> {
        let null = self.abi_value("MPI_REQUEST_NULL");
        let h = self.read_i32(node, slot)?;
        if h == null {
            return Ok(true);
        }
        let done = self.complete(node, h, block)?;
        if done {
            self.write_i32(node, slot, null)?;
        }
        Ok(done)
    }

    fn external(&mut self, node: &Node, callee: &str, args: &[Val]) -> Result<(), ExecError> {
        let a = |i: usize| match args.get(i) {
            Some(Val::S(Scalar::Int(v))) => Ok(*v),
            _ => Err(trap(node, format!("argument #{i} of @{callee} is not an integer or pointer"))),
        };
        match callee {
            "MPI_Init" | "MPI_Finalize" => {}
            "MPI_Comm_rank" | "MPI_Comm_size" => {
                self.check_comm(node, a(0)?)?;
                let v = if callee == "MPI_Comm_rank" { self.comm.rank() } else { self.comm.size() };
                self.write_i32(node, a(1)?, v as i64)?;
            }
            "MPI_Send" | "MPI_Isend" => {
                self.check_comm(node, a(5)?)?;
                let h = self.isend(node, a(0)?, a(1)?, a(2)?, a(3)?, a(4)?)?;
                if callee == "MPI_Isend" {
                    self.write_i32(node, a(6)?, h)?;
                } else {
                    self.complete(node, h, true)?;
                }
            }
            "MPI_Recv" | "MPI_Irecv" => {
                self.check_comm(node, a(5)?)?;
                let h = self.irecv(node, a(0)?, a(1)?, a(2)?, a(3)?, a(4)?)?;
                if callee == "MPI_Irecv" {
                    self.write_i32(node, a(6)?, h)?;
                } else {
                    self.complete(node, h, true)?;
                }
            }
            "MPI_Wait" => {
                self.complete_slot(node, a(0)?, true)?;
            }
            "MPI_Test" => {
                let done = self.complete_slot(node, a(0)?, false)?;
                self.write_i32(node, a(1)?, i64::from(done))?;
            }
            "MPI_Waitall" => {
                let (count, base) = (a(0)?, a(1)?);
                for i in 0..count {
                    self.complete_slot(node, base + 4 * i, true)?;
                }
            }
            "MPI_Reduce" | "MPI_Allreduce" => {
                let all = callee == "MPI_Allreduce";
                let kind = self.reduce_op(node, a(4)?)?;
                if !all && a(5)? != 0 {
                    return Err(trap(node, "only root 0 is supported"));
                }
                self.check_comm(node, a(if all { 5 } else { 6 })?)?;
                self.reduce(node, a(0)?, a(1)?, a(2)?, a(3)?, kind, all)?;
            }
            "MPI_Bcast" => {
                if a(3)? != 0 {
                    return Err(trap(node, "only root 0 is supported"));
                }
                self.check_comm(node, a(4)?)?;
                self.bcast(node, a(0)?, a(1)?, a(2)?)?;
            }
            "MPI_Gather" => {
                if a(6)? != 0 {
                    return Err(trap(node, "only root 0 is supported"));
                }
                self.check_comm(node, a(7)?)?;
                self.gather(node, a(0)?, a(3)?, a(1)?, a(2)?)?;
            }
            _ => return Err(trap(node, format!("call to unknown external function @{callee}"))),
        }
        self.comm.yield_point()
    }
}

fn walk_accesses<'a>(b: &'a Block, f: &mut impl FnMut(&'a Node)) {
    for n in &b.ops {
        f(n);
        for r in &n.regions {
            walk_accesses(r, f);
        }
    }
}

fn fbin(op: FBin, a: Scalar, b: Scalar) -> Option<Scalar> {
    macro_rules! go {
        ($x:expr, $y:expr) => {
            match op {
                FBin::Add => $x + $y,
                FBin::Sub => $x - $y,
                FBin::Mul => $x * $y,
                FBin::Div => $x / $y,
                FBin::Max => $x.max($y),
                FBin::Min => $x.min($y),
            }
        };
    }
    match (a, b) {
        (Scalar::F64(x), Scalar::F64(y)) => Some(Scalar::F64(go!(x, y))),
        (Scalar::F32(x), Scalar::F32(y)) => Some(Scalar::F32(go!(x, y))),
        _ => None,
    }
}

fn combine(a: &Data, b: &Data, kind: ReduceKind) -> Option<Data> {
    macro_rules! zip {
        ($x:expr, $y:expr, $ctor:path) => {{
            if $x.len() != $y.len() {
                return None;
            }
            $ctor(
                $x.iter()
                    .zip($y.iter())
                    .map(|(p, q)| match kind {
                        ReduceKind::Sum => *p + *q,
                        ReduceKind::Prod => *p * *q,
                        ReduceKind::Max => if *q > *p { *q } else { *p },
                        ReduceKind::Min => if *q < *p { *q } else { *p },
                    })
                    .collect(),
            )
        }};
    }
    Some(match (a, b) {
        (Data::F64(x), Data::F64(y)) => zip!(x, y, Data::F64),
        (Data::F32(x), Data::F32(y)) => zip!(x, y, Data::F32),
        (Data::I32(x), Data::I32(y)) => zip!(x, y, Data::I32),
        (Data::I64(x), Data::I64(y)) => zip!(x, y, Data::I64),
        _ => return None,
    })
}
