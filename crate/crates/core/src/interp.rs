//! Concrete reference interpreter and bounded enumeration oracle.
//!
//! This is the ground truth the abstract domain is tested against: it
//! executes the instrumented IR over explicit heaps, fans out on `nondet`,
//! and can exhaustively enumerate all small inputs for a harness. The
//! enumerator is used to confirm that buggy corpus programs really fail on
//! a small input, to differential-test the dataflow cleanup, and to check
//! that concrete reachable traces are covered by the abstract `seen` set.

use crate::ir::*;
use std::collections::BTreeSet;
use std::fmt;

/// A concrete pointer: `region == None` is null. Offsets are element
/// offsets into array regions (records are always at offset 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PtrV {
    pub region: Option<usize>,
    pub off: i64,
}

impl PtrV {
    pub const NULL: PtrV = PtrV { region: None, off: 0 };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Value {
    Int(i64),
    Ptr(PtrV),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionKind {
    Array,
    Record(RecordId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub kind: RegionKind,
    /// One slot per array element or record field. `None` = uninitialized.
    pub data: Vec<Option<Value>>,
    pub live: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pc {
    At(InstrId),
    Halted,
    Failed(InstrId),
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcreteState {
    pub pc: Pc,
    pub locals: Vec<Option<Value>>,
    pub heap: Vec<Region>,
    pub malloc_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcreteTrace {
    pub states: Vec<ConcreteState>,
}

impl ConcreteTrace {
    pub fn first(&self) -> &ConcreteState {
        &self.states[0]
    }
    pub fn last(&self) -> &ConcreteState {
        self.states.last().expect("empty trace")
    }
}

/// A fault in an *unchecked* operation. Instrumented programs guard every
/// memory access and division, so hitting one of these means either the
/// program was not instrumented or a required check was optimized away.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UncheckedFault {
    pub at: InstrId,
    pub what: String,
}

impl fmt::Display for UncheckedFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unchecked fault at instruction {}: {}", self.at, self.what)
    }
}

pub type ExecResult<T> = Result<T, UncheckedFault>;

#[derive(Debug, Clone)]
pub struct OracleConfig {
    /// Largest structure size enumerated (array length / node count).
    pub max_input_size: usize,
    /// Per-execution step budget.
    pub max_steps: usize,
    /// Fan-out values for `nondet` results and scalar parameters.
    pub nondet_values: Vec<i64>,
    /// Values enumerated for array elements and record int fields.
    pub elem_values: Vec<i64>,
    /// Cap on the number of enumerated initial states.
    pub max_inputs: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            max_input_size: 3,
            max_steps: 20_000,
            nondet_values: vec![-1, 0, 1, 2],
            elem_values: vec![-1, 0, 1, 2],
            max_inputs: 200_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Witness {
    pub input: String,
    pub trace: ConcreteTrace,
    pub failed_at: InstrId,
}

#[derive(Debug, Clone)]
pub enum OracleOutcome {
    /// A concrete failing execution, with the input that produced it.
    FailingTrace(Box<Witness>),
    /// Every enumerated execution terminated without failing.
    SafeUpToBound,
    /// No failure found, but some execution exhausted the step budget, so
    /// the result is not a safety statement even up to the bound.
    BoundExhausted,
}

impl OracleOutcome {
    pub fn is_failing(&self) -> bool {
        matches!(self, OracleOutcome::FailingTrace(_))
    }
}

fn eval(st: &ConcreteState, o: &Operand, at: InstrId) -> ExecResult<Value> {
    match o {
        Operand::Const(c) => Ok(Value::Int(*c)),
        Operand::Local(l) => st.locals[*l as usize]
            .ok_or_else(|| UncheckedFault { at, what: format!("read of uninitialized local #{}", l) }),
    }
}

fn eval_int(st: &ConcreteState, o: &Operand, at: InstrId) -> ExecResult<i64> {
    match eval(st, o, at)? {
        Value::Int(v) => Ok(v),
        Value::Ptr(_) => Err(UncheckedFault { at, what: "pointer used as integer".into() }),
    }
}

fn eval_ptr(st: &ConcreteState, l: LocalId, at: InstrId) -> ExecResult<PtrV> {
    match eval(st, &Operand::Local(l), at)? {
        Value::Ptr(p) => Ok(p),
        Value::Int(0) => Ok(PtrV::NULL),
        Value::Int(_) => Err(UncheckedFault { at, what: "integer used as pointer".into() }),
    }
}

/// Resolve an access `(*p)` / `p->field` to a (region, slot) pair, checking
/// validity. Used both by loads/stores (where failure is an unchecked
/// fault) and by `Check` evaluation (where failure fails the check).
fn resolve_access(st: &ConcreteState, p: PtrV, field: Option<u16>) -> Result<(usize, usize), String> {
    let r = match p.region {
        None => return Err("null pointer".into()),
        Some(r) => r,
    };
    let reg = &st.heap[r];
    if !reg.live {
        return Err("dead region".into());
    }
    match (reg.kind, field) {
        (RegionKind::Array, None) => {
            if p.off < 0 || p.off as usize >= reg.data.len() {
                Err(format!("array offset {} out of bounds 0..{}", p.off, reg.data.len()))
            } else {
                Ok((r, p.off as usize))
            }
        }
        (RegionKind::Record(_), Some(f)) => {
            if p.off != 0 {
                Err("record pointer with nonzero offset".into())
            } else if (f as usize) < reg.data.len() {
                Ok((r, f as usize))
            } else {
                Err("field index out of range".into())
            }
        }
        (RegionKind::Array, Some(_)) => Err("field access on array element".into()),
        (RegionKind::Record(_), None) => Err("scalar deref of record pointer".into()),
    }
}

fn binop_int(op: BinOp, a: i64, b: i64, ty: IntTy, at: InstrId) -> ExecResult<i64> {
    let raw = match op {
        BinOp::Add => a.wrapping_add(b),
        BinOp::Sub => a.wrapping_sub(b),
        BinOp::Mul => a.wrapping_mul(b),
        BinOp::Div => {
            if b == 0 {
                return Err(UncheckedFault { at, what: "division by zero".into() });
            }
            a.wrapping_div(b)
        }
        BinOp::Rem => {
            if b == 0 {
                return Err(UncheckedFault { at, what: "remainder by zero".into() });
            }
            a.wrapping_rem(b)
        }
        BinOp::BitAnd => a & b,
        BinOp::BitOr => a | b,
        BinOp::BitXor => a ^ b,
        BinOp::Shl => a.wrapping_shl(b as u32 & 63),
        BinOp::Shr => {
            if ty.signed {
                a.wrapping_shr(b as u32 & 63)
            } else {
                ((a as u64).wrapping_shr(b as u32 & 63)) as i64
            }
        }
        BinOp::PtrAdd => unreachable!("PtrAdd handled by caller"),
    };
    Ok(ty.wrap(raw))
}

fn cmp_values(op: CmpOp, a: Value, b: Value, at: InstrId) -> ExecResult<bool> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => Ok(op.eval(x, y)),
        (Value::Ptr(p), Value::Ptr(q)) => match op {
            CmpOp::Eq => Ok(p == q),
            CmpOp::Ne => Ok(p != q),
            _ => Err(UncheckedFault { at, what: "ordered pointer comparison".into() }),
        },
        // NULL literals arrive as integer 0.
        (Value::Ptr(p), Value::Int(0)) | (Value::Int(0), Value::Ptr(p)) => match op {
            CmpOp::Eq => Ok(p == PtrV::NULL),
            CmpOp::Ne => Ok(p != PtrV::NULL),
            _ => Err(UncheckedFault { at, what: "ordered pointer/int comparison".into() }),
        },
        _ => Err(UncheckedFault { at, what: "comparison of pointer and integer".into() }),
    }
}

fn eval_check(st: &ConcreteState, kind: &CheckKind, at: InstrId) -> ExecResult<bool> {
    match kind {
        CheckKind::Deref { addr, field } => {
            let p = eval_ptr(st, *addr, at)?;
            Ok(resolve_access(st, p, *field).is_ok())
        }
        CheckKind::DivNonZero { divisor } => Ok(eval_int(st, divisor, at)? != 0),
        CheckKind::NoOverflow { op, a, b, ty } => {
            let x = eval_int(st, a, at)? as i128;
            let y = eval_int(st, b, at)? as i128;
            let raw = match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                _ => return Ok(true),
            };
            Ok(raw >= ty.min() as i128 && raw <= ty.max() as i128)
        }
    }
}

/// Execute one instruction. Returns every successor state (more than one
/// only for `Nondet`); terminal states (`Halted`/`Failed`/`Ignored`) have
/// no successors.
pub fn concrete_step(ir: &ProgramIR, st: &ConcreteState, nondet_values: &[i64]) -> ExecResult<Vec<ConcreteState>> {
    let at = match st.pc {
        Pc::At(i) => i,
        _ => return Ok(vec![]),
    };
    let ins = &ir.instrs[at as usize];
    let mut next = st.clone();
    next.pc = Pc::At(at + 1);
    match ins {
        Instr::Assign { dst, src } => {
            next.locals[*dst as usize] = Some(eval(st, src, at)?);
        }
        Instr::Unop { dst, op, src, ty } => {
            let v = eval_int(st, src, at)?;
            let r = match op {
                UnOp::Neg => ty.wrap(v.wrapping_neg()),
                UnOp::BitNot => ty.wrap(!v),
                UnOp::Not => i64::from(v == 0),
                UnOp::Cast => ty.wrap(v),
            };
            next.locals[*dst as usize] = Some(Value::Int(r));
        }
        Instr::Binop { dst, op, a, b, ty } => {
            if *op == BinOp::PtrAdd {
                let p = match eval(st, a, at)? {
                    Value::Ptr(p) => p,
                    Value::Int(0) => PtrV::NULL,
                    Value::Int(_) => {
                        return Err(UncheckedFault { at, what: "integer base in pointer arithmetic".into() })
                    }
                };
                let idx = eval_int(st, b, at)?;
                next.locals[*dst as usize] =
                    Some(Value::Ptr(PtrV { region: p.region, off: p.off.wrapping_add(idx) }));
            } else {
                let x = eval_int(st, a, at)?;
                let y = eval_int(st, b, at)?;
                next.locals[*dst as usize] = Some(Value::Int(binop_int(*op, x, y, *ty, at)?));
            }
        }
        Instr::Load { dst, addr, field } => {
            let p = eval_ptr(st, *addr, at)?;
            let (r, slot) = resolve_access(st, p, *field).map_err(|what| UncheckedFault { at, what })?;
            let v = st.heap[r].data[slot]
                .ok_or_else(|| UncheckedFault { at, what: "load of uninitialized slot".into() })?;
            next.locals[*dst as usize] = Some(v);
        }
        Instr::Store { addr, field, val } => {
            let p = eval_ptr(st, *addr, at)?;
            let v = eval(st, val, at)?;
            let (r, slot) = resolve_access(st, p, *field).map_err(|what| UncheckedFault { at, what })?;
            next.heap[r].data[slot] = Some(v);
        }
        Instr::Alloc { dst, rec } => {
            let nfields = ir.records[*rec as usize].fields.len();
            next.heap.push(Region { kind: RegionKind::Record(*rec), data: vec![None; nfields], live: true });
            next.locals[*dst as usize] = Some(Value::Ptr(PtrV { region: Some(next.heap.len() - 1), off: 0 }));
            next.malloc_count += 1;
        }
        Instr::Nondet { dst, ty } => {
            let mut out = Vec::with_capacity(nondet_values.len());
            for v in nondet_values {
                let mut s = next.clone();
                s.locals[*dst as usize] = Some(Value::Int(ty.wrap(*v)));
                out.push(s);
            }
            return Ok(out);
        }
        Instr::Branch { op, a, b, then_t, else_t } => {
            let x = eval(st, a, at)?;
            let y = eval(st, b, at)?;
            next.pc = Pc::At(if cmp_values(*op, x, y, at)? { *then_t } else { *else_t });
        }
        Instr::Jump { target } => {
            next.pc = Pc::At(*target);
        }
        Instr::Check { kind } => {
            if !eval_check(st, kind, at)? {
                next.pc = Pc::Failed(at);
            }
        }
        Instr::Fail => {
            next.pc = Pc::Failed(at);
        }
        Instr::Ignore => {
            next.pc = Pc::Ignored;
        }
        Instr::Halt => {
            next.pc = Pc::Halted;
        }
        Instr::LoopEnter { .. } | Instr::LoopIter { .. } | Instr::LoopEnd { .. } => {}
    }
    Ok(vec![next])
}

/// Trace size: regions reachable from the input arguments in the first
/// state, plus reachable array elements, plus mallocs performed so far.
/// This is the well-founded measure the descent argument runs on.
pub fn trace_size(ir: &ProgramIR, trace: &ConcreteTrace) -> u64 {
    let st0 = trace.first();
    let mut seen: BTreeSet<usize> = BTreeSet::new();
    let mut stack: Vec<usize> = Vec::new();
    for p in &ir.params {
        let root = match p {
            ParamShape::ArrayRecord { data, .. } => *data,
            ParamShape::LinkedRecord { root, .. } => *root,
            ParamShape::Scalar { .. } => continue,
        };
        if let Some(Value::Ptr(PtrV { region: Some(r), .. })) = st0.locals[root as usize] {
            stack.push(r);
        }
    }
    while let Some(r) = stack.pop() {
        if !seen.insert(r) {
            continue;
        }
        for slot in st0.heap[r].data.iter().flatten() {
            if let Value::Ptr(PtrV { region: Some(q), .. }) = slot {
                stack.push(*q);
            }
        }
    }
    let mut size = 0u64;
    for r in &seen {
        size += 1;
        if st0.heap[*r].kind == RegionKind::Array {
            size += st0.heap[*r].data.len() as u64;
        }
    }
    size + trace.last().malloc_count
}

// ---------------------------------------------------------------------------
// Input enumeration
// ---------------------------------------------------------------------------

fn fresh_state(ir: &ProgramIR) -> ConcreteState {
    ConcreteState { pc: Pc::At(0), locals: vec![None; ir.locals.len()], heap: vec![], malloc_count: 0 }
}

fn value_tuples(values: &[i64], n: usize) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        let mut nx = Vec::with_capacity(out.len() * values.len());
        for t in &out {
            for v in values {
                let mut t2 = t.clone();
                t2.push(*v);
                nx.push(t2);
            }
        }
        out = nx;
    }
    out
}

/// Partial input: heap regions plus the root value for one parameter.
#[derive(Clone)]
struct ParamInput {
    desc: String,
    regions: Vec<Region>,
    root: Value,
}

fn array_inputs(cfg: &OracleConfig, elem: IntTy, name: &str) -> Vec<(ParamInput, i64)> {
    let mut out = Vec::new();
    for len in 0..=cfg.max_input_size {
        for vals in value_tuples(&cfg.elem_values, len) {
            let data: Vec<Option<Value>> = vals.iter().map(|v| Some(Value::Int(elem.wrap(*v)))).collect();
            let desc = format!("{}=[{}]", name, vals.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
            let regions = vec![Region { kind: RegionKind::Array, data, live: true }];
            out.push((
                ParamInput { desc, regions, root: Value::Ptr(PtrV { region: Some(0), off: 0 }) },
                len as i64,
            ));
        }
    }
    out
}

/// All heap shapes for a linked record with `n` nodes. Self-recursive
/// pointer fields enumerate child shapes (yielding chains for one such
/// field, binary trees for two); integer fields enumerate `elem_values`;
/// pointer fields to other record types stay null.
fn linked_inputs(ir: &ProgramIR, cfg: &OracleConfig, rec: RecordId, name: &str) -> Vec<ParamInput> {
    let fields = &ir.records[rec as usize].fields;
    let self_ptrs: Vec<usize> = fields
        .iter()
        .enumerate()
        .filter(|(_, f)| matches!(f.ty, ValTy::Ptr(Pointee::Record(r)) if r == rec))
        .map(|(i, _)| i)
        .collect();
    let int_fields: Vec<(usize, IntTy)> = fields
        .iter()
        .enumerate()
        .filter_map(|(i, f)| match f.ty {
            ValTy::Int(t) => Some((i, t)),
            _ => None,
        })
        .collect();

    // Enumerate shapes: number of nodes per subtree under each self pointer.
    // A shape is a nested structure; build regions recursively.
    fn shapes(n: usize, k: usize) -> Vec<Vec<usize>> {
        // Partitions of n nodes among k children (ordered).
        if k == 0 {
            return if n == 0 { vec![vec![]] } else { vec![] };
        }
        let mut out = Vec::new();
        for first in 0..=n {
            for rest in shapes(n - first, k - 1) {
                let mut s = vec![first];
                s.extend(rest);
                out.push(s);
            }
        }
        out
    }

    // Build one structure of exactly `n` nodes; returns all variants as
    // (regions, root index) with uninitialized int fields to fill later.
    fn build(n: usize, self_ptrs: &[usize], nfields: usize, rec: RecordId) -> Vec<(Vec<Region>, Option<usize>)> {
        if n == 0 {
            return vec![(vec![], None)];
        }
        let mut out = Vec::new();
        for part in shapes(n - 1, self_ptrs.len()) {
            // Cartesian product of child structures.
            let mut variants: Vec<(Vec<Region>, Vec<Option<usize>>)> = vec![(vec![], vec![])];
            for (ci, &cn) in part.iter().enumerate() {
                let _ = ci;
                let subs = build(cn, self_ptrs, nfields, rec);
                let mut nx = Vec::new();
                for (regs, roots) in &variants {
                    for (sregs, sroot) in &subs {
                        let base = regs.len();
                        let mut regs2 = regs.clone();
                        // Shift region indices of the child structure.
                        for r in sregs {
                            let mut r2 = r.clone();
                            for slot in r2.data.iter_mut().flatten() {
                                if let Value::Ptr(PtrV { region: Some(q), .. }) = slot {
                                    *slot = Value::Ptr(PtrV { region: Some(*q + base), off: 0 });
                                }
                            }
                            regs2.push(r2);
                        }
                        let mut roots2 = roots.clone();
                        roots2.push(sroot.map(|r| r + base));
                        nx.push((regs2, roots2));
                    }
                }
                variants = nx;
            }
            for (mut regs, child_roots) in variants {
                let me = regs.len();
                let mut data = vec![None; nfields];
                for (i, fp) in self_ptrs.iter().enumerate() {
                    data[*fp] = Some(match child_roots[i] {
                        Some(r) => Value::Ptr(PtrV { region: Some(r), off: 0 }),
                        None => Value::Ptr(PtrV::NULL),
                    });
                }
                regs.push(Region { kind: RegionKind::Record(rec), data, live: true });
                out.push((regs, Some(me)));
            }
        }
        out
    }

    let nfields = fields.len();
    let mut out = Vec::new();
    for n in 0..=cfg.max_input_size {
        for (mut regs, root) in build(n, &self_ptrs, nfields, rec) {
            // Null out non-recursive pointer fields.
            for r in regs.iter_mut() {
                for (fi, f) in fields.iter().enumerate() {
                    if matches!(f.ty, ValTy::Ptr(p) if p != Pointee::Record(rec)) && r.data[fi].is_none() {
                        r.data[fi] = Some(Value::Ptr(PtrV::NULL));
                    }
                }
            }
            // Fill int fields with every combination of elem values.
            let slots: Vec<(usize, usize, IntTy)> = (0..regs.len())
                .flat_map(|ri| int_fields.iter().map(move |(fi, t)| (ri, *fi, *t)))
                .collect();
            for vals in value_tuples(&cfg.elem_values, slots.len()) {
                let mut regs2 = regs.clone();
                for ((ri, fi, t), v) in slots.iter().zip(vals.iter()) {
                    regs2[*ri].data[*fi] = Some(Value::Int(t.wrap(*v)));
                }
                let root_v = match root {
                    Some(r) => Value::Ptr(PtrV { region: Some(r), off: 0 }),
                    None => Value::Ptr(PtrV::NULL),
                };
                let desc = format!("{}=<{} nodes, vals {:?}>", name, n, vals);
                out.push(ParamInput { desc, regions: regs2, root: root_v });
            }
        }
    }
    out
}

/// Enumerate all initial states for the harness up to the configured size.
pub fn enumerate_inputs(ir: &ProgramIR, cfg: &OracleConfig) -> Vec<(String, ConcreteState)> {
    let mut per_param: Vec<Vec<ParamInput>> = Vec::new();
    for p in &ir.params {
        match p {
            ParamShape::Scalar { local, ty } => {
                let name = ir.local_name(*local).to_string();
                per_param.push(
                    cfg.nondet_values
                        .iter()
                        .map(|v| ParamInput {
                            desc: format!("{}={}", name, v),
                            regions: vec![],
                            root: Value::Int(ty.wrap(*v)),
                        })
                        .collect(),
                );
            }
            ParamShape::ArrayRecord { elem, name, .. } => {
                per_param.push(array_inputs(cfg, *elem, name).into_iter().map(|(p, _)| p).collect());
            }
            ParamShape::LinkedRecord { rec, name, .. } => {
                per_param.push(linked_inputs(ir, cfg, *rec, name));
            }
        }
    }

    let mut states: Vec<(String, ConcreteState)> = vec![(String::new(), fresh_state(ir))];
    for (pi, inputs) in per_param.iter().enumerate() {
        let mut nx = Vec::with_capacity(states.len() * inputs.len());
        'outer: for (desc, st) in &states {
            for inp in inputs {
                if nx.len() >= cfg.max_inputs {
                    break 'outer;
                }
                let mut st2 = st.clone();
                let base = st2.heap.len();
                for r in &inp.regions {
                    let mut r2 = r.clone();
                    for slot in r2.data.iter_mut().flatten() {
                        if let Value::Ptr(p) = *slot {
                            if let Some(q) = p.region {
                                *slot = Value::Ptr(PtrV { region: Some(q + base), off: p.off });
                            }
                        }
                    }
                    st2.heap.push(r2);
                }
                let root = match inp.root {
                    Value::Ptr(PtrV { region: Some(r), off }) => Value::Ptr(PtrV { region: Some(r + base), off }),
                    v => v,
                };
                match &ir.params[pi] {
                    ParamShape::Scalar { local, .. } => st2.locals[*local as usize] = Some(root),
                    ParamShape::LinkedRecord { root: l, .. } => st2.locals[*l as usize] = Some(root),
                    ParamShape::ArrayRecord { data, len, .. } => {
                        st2.locals[*data as usize] = Some(root);
                        let n = match root {
                            Value::Ptr(PtrV { region: Some(r), .. }) => st2.heap[r].data.len() as i64,
                            _ => 0,
                        };
                        st2.locals[*len as usize] = Some(Value::Int(n));
                    }
                }
                let d2 = if desc.is_empty() { inp.desc.clone() } else { format!("{}, {}", desc, inp.desc) };
                nx.push((d2, st2));
            }
        }
        states = nx;
    }
    states
}

/// Run every execution from `st0` (fanning out on nondet), calling `on_done`
/// for each complete trace. Returns false if the step budget was exhausted
/// on any path.
fn run_all<F: FnMut(&ConcreteTrace) -> bool>(
    ir: &ProgramIR,
    st0: ConcreteState,
    cfg: &OracleConfig,
    on_done: &mut F,
) -> ExecResult<bool> {
    let mut stack: Vec<ConcreteTrace> = vec![ConcreteTrace { states: vec![st0] }];
    let mut complete = true;
    while let Some(tr) = stack.pop() {
        let last = tr.last();
        if !matches!(last.pc, Pc::At(_)) {
            if !on_done(&tr) {
                return Ok(complete);
            }
            continue;
        }
        if tr.states.len() > cfg.max_steps {
            complete = false;
            continue;
        }
        for succ in concrete_step(ir, last, &cfg.nondet_values)? {
            let mut t2 = tr.clone();
            t2.states.push(succ);
            stack.push(t2);
        }
    }
    Ok(complete)
}

/// Exhaustively run the harness on all inputs up to the configured bound.
pub fn enumerate_reachable(ir: &ProgramIR, cfg: &OracleConfig) -> ExecResult<OracleOutcome> {
    let mut exhausted = false;
    for (desc, st0) in enumerate_inputs(ir, cfg) {
        let mut witness: Option<Witness> = None;
        let complete = run_all(ir, st0, cfg, &mut |tr| {
            if let Pc::Failed(at) = tr.last().pc {
                witness = Some(Witness { input: desc.clone(), trace: tr.clone(), failed_at: at });
                false
            } else {
                true
            }
        })?;
        if let Some(w) = witness {
            return Ok(OracleOutcome::FailingTrace(Box::new(w)));
        }
        if !complete {
            exhausted = true;
        }
    }
    Ok(if exhausted { OracleOutcome::BoundExhausted } else { OracleOutcome::SafeUpToBound })
}

/// Collect up to `limit` complete traces (for coverage checks).
pub fn sample_traces(ir: &ProgramIR, cfg: &OracleConfig, limit: usize) -> ExecResult<Vec<ConcreteTrace>> {
    let mut out = Vec::new();
    for (_, st0) in enumerate_inputs(ir, cfg) {
        if out.len() >= limit {
            break;
        }
        run_all(ir, st0, cfg, &mut |tr| {
            if out.len() < limit {
                out.push(tr.clone());
            }
            out.len() < limit
        })?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A tiny hand-built program: x = a + 1; if (x > 2) fail.
    fn add_one_ir() -> ProgramIR {
        ProgramIR {
            name: "t".into(),
            records: vec![],
            locals: vec![
                LocalDecl { name: "a".into(), ty: ValTy::Int(IntTy::INT) },
                LocalDecl { name: "x".into(), ty: ValTy::Int(IntTy::INT) },
            ],
            params: vec![ParamShape::Scalar { local: 0, ty: IntTy::INT }],
            instrs: vec![
                Instr::Binop { dst: 1, op: BinOp::Add, a: Operand::Local(0), b: Operand::Const(1), ty: IntTy::INT },
                Instr::Branch { op: CmpOp::Gt, a: Operand::Local(1), b: Operand::Const(2), then_t: 2, else_t: 3 },
                Instr::Fail,
                Instr::Halt,
            ],
            loops: vec![],
            lines: vec![1, 2, 2, 3],
        }
    }

    #[test]
    fn oracle_finds_scalar_bug() {
        let ir = add_one_ir();
        let cfg = OracleConfig::default();
        match enumerate_reachable(&ir, &cfg).unwrap() {
            OracleOutcome::FailingTrace(w) => {
                assert_eq!(w.input, "a=2");
                assert!(matches!(w.trace.last().pc, Pc::Failed(2)));
            }
            o => panic!("expected failing trace, got {:?}", o),
        }
    }

    #[test]
    fn oracle_reports_safe_when_bug_out_of_range() {
        let ir = add_one_ir();
        let cfg = OracleConfig { nondet_values: vec![-1, 0, 1], ..OracleConfig::default() };
        assert!(matches!(enumerate_reachable(&ir, &cfg).unwrap(), OracleOutcome::SafeUpToBound));
    }

    #[test]
    fn nondet_fans_out() {
        let ir = ProgramIR {
            name: "t".into(),
            records: vec![],
            locals: vec![LocalDecl { name: "x".into(), ty: ValTy::Int(IntTy::INT) }],
            params: vec![],
            instrs: vec![Instr::Nondet { dst: 0, ty: IntTy::INT }, Instr::Halt],
            loops: vec![],
            lines: vec![1, 1],
        };
        let st = fresh_state(&ir);
        let succ = concrete_step(&ir, &st, &[-1, 0, 1, 2]).unwrap();
        assert_eq!(succ.len(), 4);
        let vals: Vec<i64> = succ
            .iter()
            .map(|s| match s.locals[0] {
                Some(Value::Int(v)) => v,
                _ => panic!(),
            })
            .collect();
        assert_eq!(vals, vec![-1, 0, 1, 2]);
    }

    #[test]
    fn linked_input_enumeration_counts() {
        // One self pointer -> chains: exactly one shape per length; with one
        // int field and 2 candidate values: sum over n of 2^n structures.
        let ir = ProgramIR {
            name: "t".into(),
            records: vec![RecordDef {
                name: "node".into(),
                fields: vec![
                    FieldDef { name: "v".into(), ty: ValTy::Int(IntTy::INT) },
                    FieldDef { name: "next".into(), ty: ValTy::Ptr(Pointee::Record(0)) },
                ],
            }],
            locals: vec![LocalDecl { name: "l".into(), ty: ValTy::Ptr(Pointee::Record(0)) }],
            params: vec![ParamShape::LinkedRecord { root: 0, rec: 0, name: "l".into() }],
            instrs: vec![Instr::Halt],
            loops: vec![],
            lines: vec![1],
        };
        let cfg = OracleConfig { max_input_size: 3, elem_values: vec![0, 1], ..OracleConfig::default() };
        let inputs = enumerate_inputs(&ir, &cfg);
        // n=0:1, n=1:2, n=2:4, n=3:8 value assignments; one chain shape each.
        assert_eq!(inputs.len(), 1 + 2 + 4 + 8);
    }

    #[test]
    fn trace_size_counts_regions_elements_and_mallocs() {
        let ir = ProgramIR {
            name: "t".into(),
            records: vec![RecordDef {
                name: "node".into(),
                fields: vec![
                    FieldDef { name: "v".into(), ty: ValTy::Int(IntTy::INT) },
                    FieldDef { name: "next".into(), ty: ValTy::Ptr(Pointee::Record(0)) },
                ],
            }],
            locals: vec![
                LocalDecl { name: "l".into(), ty: ValTy::Ptr(Pointee::Record(0)) },
                LocalDecl { name: "a".into(), ty: ValTy::Ptr(Pointee::Elem(IntTy::INT)) },
                LocalDecl { name: "n_a".into(), ty: ValTy::Int(IntTy::INT) },
            ],
            params: vec![
                ParamShape::LinkedRecord { root: 0, rec: 0, name: "l".into() },
                ParamShape::ArrayRecord { data: 1, len: 2, elem: IntTy::INT, name: "a".into() },
            ],
            instrs: vec![Instr::Halt],
            loops: vec![],
            lines: vec![1],
        };
        // Two-node list + three-element array.
        let st = ConcreteState {
            pc: Pc::At(0),
            locals: vec![
                Some(Value::Ptr(PtrV { region: Some(0), off: 0 })),
                Some(Value::Ptr(PtrV { region: Some(2), off: 0 })),
                Some(Value::Int(3)),
            ],
            heap: vec![
                Region {
                    kind: RegionKind::Record(0),
                    data: vec![Some(Value::Int(7)), Some(Value::Ptr(PtrV { region: Some(1), off: 0 }))],
                    live: true,
                },
                Region {
                    kind: RegionKind::Record(0),
                    data: vec![Some(Value::Int(8)), Some(Value::Ptr(PtrV::NULL))],
                    live: true,
                },
                Region {
                    kind: RegionKind::Array,
                    data: vec![Some(Value::Int(0)); 3],
                    live: true,
                },
            ],
            malloc_count: 0,
        };
        let mut tr = ConcreteTrace { states: vec![st] };
        // 2 record regions + 1 array region + 3 elements = 6.
        assert_eq!(trace_size(&ir, &tr), 6);
        // Mallocs add to the measure.
        let mut st2 = tr.states[0].clone();
        st2.malloc_count = 2;
        tr.states.push(st2);
        assert_eq!(trace_size(&ir, &tr), 8);
    }

    #[test]
    fn trace_size_strictly_decreases_for_shrunk_inputs() {
        // Chains of length 3, 2, 1 over the same record type.
        let ir = ProgramIR {
            name: "t".into(),
            records: vec![RecordDef {
                name: "node".into(),
                fields: vec![FieldDef { name: "next".into(), ty: ValTy::Ptr(Pointee::Record(0)) }],
            }],
            locals: vec![LocalDecl { name: "l".into(), ty: ValTy::Ptr(Pointee::Record(0)) }],
            params: vec![ParamShape::LinkedRecord { root: 0, rec: 0, name: "l".into() }],
            instrs: vec![Instr::Halt],
            loops: vec![],
            lines: vec![1],
        };
        let chain = |n: usize| -> ConcreteTrace {
            let mut heap = Vec::new();
            for i in 0..n {
                let next = if i + 1 < n {
                    Value::Ptr(PtrV { region: Some(i + 1), off: 0 })
                } else {
                    Value::Ptr(PtrV::NULL)
                };
                heap.push(Region { kind: RegionKind::Record(0), data: vec![Some(next)], live: true });
            }
            let root = if n > 0 { Value::Ptr(PtrV { region: Some(0), off: 0 }) } else { Value::Ptr(PtrV::NULL) };
            ConcreteTrace {
                states: vec![ConcreteState { pc: Pc::At(0), locals: vec![Some(root)], heap, malloc_count: 0 }],
            }
        };
        let sizes: Vec<u64> = (0..4).rev().map(|n| trace_size(&ir, &chain(n))).collect();
        assert_eq!(sizes, vec![3, 2, 1, 0]);
    }
}
