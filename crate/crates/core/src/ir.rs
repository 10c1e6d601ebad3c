//! The verification IR: a register machine over a two-level heap.
//!
//! Programs are a flat instruction vector with implicit fallthrough
//! (instruction `i` falls through to `i + 1`) except for explicit control
//! flow. Memory is reached only through `Load`/`Store` on pointer locals;
//! there is no address-of on locals, so the heap is exactly the input
//! structures plus `Alloc` results. Loops are delimited by marker
//! instructions carrying the loop id; markers are no-ops concretely and
//! drive widening and scapegoat synchronization abstractly.

use std::fmt;

pub type InstrId = u32;
pub type LocalId = u32;
pub type RecordId = u32;
pub type LoopId = u32;

/// Integer value type: width in bits plus signedness. Booleans are 0/1 ints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IntTy {
    pub bits: u8,
    pub signed: bool,
}

impl IntTy {
    pub const INT: IntTy = IntTy { bits: 32, signed: true };
    pub const UINT: IntTy = IntTy { bits: 32, signed: false };
    pub const CHAR: IntTy = IntTy { bits: 8, signed: true };
    pub const UCHAR: IntTy = IntTy { bits: 8, signed: false };
    pub const LONG: IntTy = IntTy { bits: 64, signed: true };

    /// Smallest representable value.
    pub fn min(&self) -> i64 {
        if self.signed {
            if self.bits == 64 { i64::MIN } else { -(1i64 << (self.bits - 1)) }
        } else {
            0
        }
    }

    /// Largest representable value.
    pub fn max(&self) -> i64 {
        if self.signed {
            if self.bits == 64 { i64::MAX } else { (1i64 << (self.bits - 1)) - 1 }
        } else if self.bits == 64 {
            i64::MAX // 64-bit unsigned is clamped to i64 range in this IR
        } else {
            (1i64 << self.bits) - 1
        }
    }

    /// Wrap a mathematical result to this type (two's complement).
    pub fn wrap(&self, v: i64) -> i64 {
        if self.bits >= 64 {
            return v;
        }
        let m = 1i128 << self.bits;
        let mut r = (v as i128).rem_euclid(m);
        if self.signed && r >= m / 2 {
            r -= m;
        }
        r as i64
    }

    pub fn contains(&self, v: i64) -> bool {
        v >= self.min() && v <= self.max()
    }
}

/// What a pointer points at: a record (one heap node) or a run of scalars
/// (an array region).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pointee {
    Record(RecordId),
    Elem(IntTy),
}

/// Local (register) type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValTy {
    Int(IntTy),
    Ptr(Pointee),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldDef {
    pub name: String,
    pub ty: ValTy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordDef {
    pub name: String,
    pub fields: Vec<FieldDef>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalDecl {
    pub name: String,
    pub ty: ValTy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operand {
    Local(LocalId),
    Const(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    BitAnd,
    BitOr,
    BitXor,
    Shl,
    Shr,
    /// Pointer plus element count; `a` is a pointer local, `b` an index.
    PtrAdd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    BitNot,
    /// Logical not: 0 -> 1, nonzero -> 0.
    Not,
    /// Integer conversion: wrap the source value into the result type.
    Cast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    }

    pub fn eval(self, a: i64, b: i64) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

/// Safety checks inserted by instrumentation. A failing check moves the
/// trace to the absorbing failure state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CheckKind {
    /// Pointer is non-null, its region is live, and (for array regions) the
    /// element offset is within bounds. `field` mirrors the access checked.
    Deref { addr: LocalId, field: Option<u16> },
    /// Divisor operand is nonzero.
    DivNonZero { divisor: Operand },
    /// The checked binary op does not leave the result type's range
    /// (inserted only when overflow checking is enabled).
    NoOverflow { op: BinOp, a: Operand, b: Operand, ty: IntTy },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instr {
    Assign { dst: LocalId, src: Operand },
    Unop { dst: LocalId, op: UnOp, src: Operand, ty: IntTy },
    Binop { dst: LocalId, op: BinOp, a: Operand, b: Operand, ty: IntTy },
    /// `dst = *(addr)` or `dst = addr->field`.
    Load { dst: LocalId, addr: LocalId, field: Option<u16> },
    /// `*(addr) = val` or `addr->field = val`.
    Store { addr: LocalId, field: Option<u16>, val: Operand },
    /// `dst = malloc(sizeof(record))`.
    Alloc { dst: LocalId, rec: RecordId },
    /// `dst = nondet()` constrained to `ty`'s range.
    Nondet { dst: LocalId, ty: IntTy },
    Branch { op: CmpOp, a: Operand, b: Operand, then_t: InstrId, else_t: InstrId },
    Jump { target: InstrId },
    Check { kind: CheckKind },
    /// Unconditional assertion failure (absorbing).
    Fail,
    /// Input precondition violated; trace leaves the property's scope
    /// (absorbing, never a failure).
    Ignore,
    /// Normal end of the harness.
    Halt,
    LoopEnter { id: LoopId },
    LoopIter { id: LoopId },
    LoopEnd { id: LoopId },
}

impl Instr {
    /// Successor program counters. `Check` lists only the pass successor;
    /// the fail successor is the absorbing failure state.
    pub fn successors(&self, id: InstrId) -> Vec<InstrId> {
        match self {
            Instr::Branch { then_t, else_t, .. } => vec![*then_t, *else_t],
            Instr::Jump { target } => vec![*target],
            Instr::Fail | Instr::Ignore | Instr::Halt => vec![],
            _ => vec![id + 1],
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, Instr::Fail | Instr::Ignore | Instr::Halt)
    }
}

/// Loop metadata. Instructions in `enter..=end` form the loop body
/// (lowering emits loops contiguously); `iter` is the marker executed at
/// the end of every iteration, just before the back-edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopMeta {
    pub id: LoopId,
    pub enter: InstrId,
    pub iter: InstrId,
    pub end: InstrId,
    /// Locals assigned inside the body: the sync set for scapegoats.
    pub relevant: Vec<LocalId>,
}

impl LoopMeta {
    pub fn contains(&self, pc: InstrId) -> bool {
        pc >= self.enter && pc <= self.end
    }
}

/// Shape of one `test` parameter, binding the harness convention to locals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParamShape {
    Scalar { local: LocalId, ty: IntTy },
    /// A record passed by value with pointer field `X` and length field
    /// `n_X`: `data` points at exactly `len` elements, `len >= 0`.
    ArrayRecord { data: LocalId, len: LocalId, elem: IntTy, name: String },
    /// A pointer into a disjoint acyclic linked structure of `rec` nodes.
    LinkedRecord { root: LocalId, rec: RecordId, name: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramIR {
    pub name: String,
    pub records: Vec<RecordDef>,
    pub locals: Vec<LocalDecl>,
    pub params: Vec<ParamShape>,
    pub instrs: Vec<Instr>,
    pub loops: Vec<LoopMeta>,
    /// Source line per instruction (0 when synthetic).
    pub lines: Vec<u32>,
}

impl ProgramIR {
    pub fn local_ty(&self, l: LocalId) -> ValTy {
        self.locals[l as usize].ty
    }

    pub fn local_name(&self, l: LocalId) -> &str {
        &self.locals[l as usize].name
    }

    /// Innermost loop containing `pc`, if any.
    pub fn loop_at(&self, pc: InstrId) -> Option<&LoopMeta> {
        self.loops
            .iter()
            .filter(|lm| lm.contains(pc))
            .min_by_key(|lm| lm.end - lm.enter)
    }

    pub fn loop_meta(&self, id: LoopId) -> &LoopMeta {
        self.loops.iter().find(|lm| lm.id == id).expect("unknown loop id")
    }

    /// Line-oriented textual dump: `id: opcode operands -> successors`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, ins) in self.instrs.iter().enumerate() {
            let id = i as InstrId;
            let succ = ins.successors(id);
            let succ_s = if succ.is_empty() {
                "-".to_string()
            } else {
                succ.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
            };
            out.push_str(&format!("{}: {} -> {}\n", id, self.fmt_instr(ins), succ_s));
        }
        out
    }

    fn fmt_operand(&self, o: &Operand) -> String {
        match o {
            Operand::Local(l) => self.local_name(*l).to_string(),
            Operand::Const(c) => c.to_string(),
        }
    }

    fn fmt_field(&self, addr: LocalId, field: &Option<u16>) -> String {
        match (self.local_ty(addr), field) {
            (ValTy::Ptr(Pointee::Record(r)), Some(f)) => {
                format!("{}->{}", self.local_name(addr), self.records[r as usize].fields[*f as usize].name)
            }
            (_, Some(f)) => format!("{}->#{}", self.local_name(addr), f),
            (_, None) => format!("*{}", self.local_name(addr)),
        }
    }

    fn fmt_instr(&self, ins: &Instr) -> String {
        match ins {
            Instr::Assign { dst, src } => {
                format!("assign {} {}", self.local_name(*dst), self.fmt_operand(src))
            }
            Instr::Unop { dst, op, src, .. } => {
                format!("unop {} {:?} {}", self.local_name(*dst), op, self.fmt_operand(src))
            }
            Instr::Binop { dst, op, a, b, .. } => format!(
                "binop {} {:?} {} {}",
                self.local_name(*dst),
                op,
                self.fmt_operand(a),
                self.fmt_operand(b)
            ),
            Instr::Load { dst, addr, field } => {
                format!("load {} {}", self.local_name(*dst), self.fmt_field(*addr, field))
            }
            Instr::Store { addr, field, val } => {
                format!("store {} {}", self.fmt_field(*addr, field), self.fmt_operand(val))
            }
            Instr::Alloc { dst, rec } => {
                format!("alloc {} {}", self.local_name(*dst), self.records[*rec as usize].name)
            }
            Instr::Nondet { dst, .. } => format!("nondet {}", self.local_name(*dst)),
            Instr::Branch { op, a, b, .. } => {
                format!("branch {:?} {} {}", op, self.fmt_operand(a), self.fmt_operand(b))
            }
            Instr::Jump { .. } => "jump".to_string(),
            Instr::Check { kind } => match kind {
                CheckKind::Deref { addr, field } => format!("check deref {}", self.fmt_field(*addr, field)),
                CheckKind::DivNonZero { divisor } => format!("check divnz {}", self.fmt_operand(divisor)),
                CheckKind::NoOverflow { op, a, b, .. } => format!(
                    "check noovf {:?} {} {}",
                    op,
                    self.fmt_operand(a),
                    self.fmt_operand(b)
                ),
            },
            Instr::Fail => "fail".to_string(),
            Instr::Ignore => "ignore".to_string(),
            Instr::Halt => "halt".to_string(),
            Instr::LoopEnter { id } => format!("loop.enter L{}", id),
            Instr::LoopIter { id } => format!("loop.iter L{}", id),
            Instr::LoopEnd { id } => format!("loop.end L{}", id),
        }
    }
}

impl fmt::Display for ProgramIR {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dump())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn int_ty_ranges_and_wrapping() {
        assert_eq!(IntTy::INT.min(), i32::MIN as i64);
        assert_eq!(IntTy::INT.max(), i32::MAX as i64);
        assert_eq!(IntTy::UINT.min(), 0);
        assert_eq!(IntTy::UINT.max(), u32::MAX as i64);
        assert_eq!(IntTy::CHAR.min(), -128);
        assert_eq!(IntTy::CHAR.max(), 127);
        // unsigned 32-bit wraparound: UINT_MAX + 1 == 0
        assert_eq!(IntTy::UINT.wrap(u32::MAX as i64 + 1), 0);
        assert_eq!(IntTy::INT.wrap(i32::MAX as i64 + 1), i32::MIN as i64);
        assert_eq!(IntTy::CHAR.wrap(130), -126);
        assert_eq!(IntTy::UCHAR.wrap(-1), 255);
    }

    #[test]
    fn successors_follow_control_flow() {
        let br = Instr::Branch { op: CmpOp::Lt, a: Operand::Const(0), b: Operand::Const(1), then_t: 7, else_t: 9 };
        assert_eq!(br.successors(3), vec![7, 9]);
        assert_eq!(Instr::Jump { target: 2 }.successors(5), vec![2]);
        assert_eq!(Instr::Halt.successors(4), Vec::<InstrId>::new());
        assert_eq!(Instr::Fail.successors(4), Vec::<InstrId>::new());
        let asn = Instr::Assign { dst: 0, src: Operand::Const(1) };
        assert_eq!(asn.successors(4), vec![5]);
    }

    #[test]
    fn dump_format_is_line_oriented() {
        let ir = ProgramIR {
            name: "t".into(),
            records: vec![],
            locals: vec![LocalDecl { name: "x".into(), ty: ValTy::Int(IntTy::INT) }],
            params: vec![],
            instrs: vec![
                Instr::Assign { dst: 0, src: Operand::Const(3) },
                Instr::Branch { op: CmpOp::Lt, a: Operand::Local(0), b: Operand::Const(5), then_t: 2, else_t: 3 },
                Instr::Jump { target: 3 },
                Instr::Halt,
            ],
            loops: vec![],
            lines: vec![1, 2, 2, 3],
        };
        let d = ir.dump();
        let lines: Vec<&str> = d.lines().collect();
        assert_eq!(lines[0], "0: assign x 3 -> 1");
        assert_eq!(lines[1], "1: branch Lt x 5 -> 2,3");
        assert_eq!(lines[3], "3: halt -> -");
    }
}
