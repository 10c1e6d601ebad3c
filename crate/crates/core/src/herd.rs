//! Herds: tuples of abstract traces stepped over one shared constraint
//! store. Trace 0 (the primary) overapproximates all executions on the
//! current path; the remaining traces run the same program on inputs
//! shrunk by one element or node. When the primary can fail, a shrunk
//! trace provably failing at the same instruction with strictly smaller
//! input size pushes the failure down an infinite descent, so a path
//! whose failures are all deflected this way is safe.

use crate::ir::{
    BinOp, CheckKind, CmpOp, FieldDef, Instr, InstrId, IntTy, LocalId, LoopId, Operand,
    ParamShape, Pointee, ProgramIR, RecordId, UnOp, ValTy,
};
use crate::solver::{AppOp, Bound, Fact, MajorId, Solver, Term};
use std::collections::{BTreeMap, BTreeSet};

/// Diagnostic logging for lock/unlock/blame decisions, enabled by setting
/// the `DESCENT_LOG` environment variable.
pub(crate) fn log_on() -> bool {
    static ON: std::sync::OnceLock<bool> = std::sync::OnceLock::new();
    *ON.get_or_init(|| std::env::var_os("DESCENT_LOG").is_some())
}

macro_rules! dlog {
    ($($arg:tt)*) => {
        if crate::herd::log_on() {
            eprintln!($($arg)*);
        }
    };
}

/// Options that shape the abstract semantics.
#[derive(Debug, Clone)]
pub struct DomainOpts {
    /// Loop iterations abstracted exactly before widening.
    pub unroll: u32,
    /// Leading positions retained exactly through widening (array cells
    /// probed at constant indices).
    pub prefix: i64,
    /// Required size gap (primary minus shrunk trace) for a deflection.
    pub size_bound: i64,
    /// Step budget for a shrunk trace catching up per trigger.
    pub seek_budget: u32,
    /// Treat signed overflow as checked (insert wrap reasoning) instead
    /// of assuming it cannot happen.
    pub overflow_checks: bool,
    /// Disable shrunk traces entirely (the classic baseline).
    pub classic: bool,
}

impl Default for DomainOpts {
    fn default() -> Self {
        DomainOpts {
            unroll: 2,
            prefix: 2,
            size_bound: 1,
            seek_budget: 64,
            overflow_checks: false,
            classic: false,
        }
    }
}

/// Static layout shared by every herd of one program: region majors and
/// the stable slot numbering used for input anchors and widened names.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub n_locals: u32,
    /// Array majors in parameter order, with their parameter shapes.
    pub arrays: Vec<ArrayGeom>,
    /// Linked-record roots in parameter order.
    pub linked: Vec<LinkedGeom>,
    /// Summary major for each record id.
    pub summary_of: BTreeMap<RecordId, MajorId>,
    /// Slot of each region object binding site.
    pub obj_slots: BTreeMap<(MajorId, u16), u32>,
    pub size_slot: u32,
    /// First slot reserved for constant-index probe names.
    pub probe_base: u32,
    pub prefix: i64,
}

#[derive(Debug, Clone)]
pub struct ArrayGeom {
    pub major: MajorId,
    pub data_local: LocalId,
    pub len_local: LocalId,
    pub elem: IntTy,
}

#[derive(Debug, Clone)]
pub struct LinkedGeom {
    pub major: MajorId,
    pub root_local: LocalId,
    pub rec: RecordId,
    /// Field indices of pointers back into the same record type.
    pub self_fields: Vec<u16>,
}

impl Geometry {
    pub fn new(ir: &ProgramIR, prefix: i64) -> Geometry {
        let mut arrays = Vec::new();
        let mut linked = Vec::new();
        let mut next_major: MajorId = 0;
        for p in &ir.params {
            if let ParamShape::ArrayRecord { data, len, elem, .. } = p {
                arrays.push(ArrayGeom { major: next_major, data_local: *data, len_local: *len, elem: *elem });
                next_major += 1;
            }
        }
        let mut summary_of = BTreeMap::new();
        for (rid, _) in ir.records.iter().enumerate() {
            summary_of.insert(rid as RecordId, next_major);
            next_major += 1;
        }
        for p in &ir.params {
            if let ParamShape::LinkedRecord { root, rec, .. } = p {
                let self_fields = ir.records[*rec as usize]
                    .fields
                    .iter()
                    .enumerate()
                    .filter(|(_, f)| matches!(f.ty, ValTy::Ptr(Pointee::Record(r)) if r == *rec))
                    .map(|(i, _)| i as u16)
                    .collect();
                linked.push(LinkedGeom { major: summary_of[rec], root_local: *root, rec: *rec, self_fields });
            }
        }
        let n_locals = ir.locals.len() as u32;
        let mut obj_slots = BTreeMap::new();
        let mut slot = n_locals;
        for a in &arrays {
            obj_slots.insert((a.major, 0u16), slot);
            slot += 1;
        }
        for (rid, rec) in ir.records.iter().enumerate() {
            let m = summary_of[&(rid as RecordId)];
            for f in 0..rec.fields.len() as u16 {
                obj_slots.insert((m, f), slot);
                slot += 1;
            }
        }
        let size_slot = slot;
        Geometry {
            n_locals,
            arrays,
            linked,
            summary_of,
            obj_slots,
            size_slot,
            probe_base: size_slot + 1,
            prefix,
        }
    }

    pub fn array_by_major(&self, m: MajorId) -> Option<&ArrayGeom> {
        self.arrays.iter().find(|a| a.major == m)
    }

    fn probe_slot(&self, obj_slot: u32, c: i64) -> u32 {
        let idx = obj_slot - self.n_locals;
        self.probe_base + idx * (self.prefix.max(1) as u32) + c as u32
    }
}

/// One shrinking rule instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CandKind {
    /// Drop the first element of one array parameter.
    ArrayDropFirst(MajorId),
    /// Drop the last element of one array parameter.
    ArrayDropLast(MajorId),
    /// Drop the first element of every array parameter at once.
    ArrayDropFirstAll,
    /// Drop the head node of a singly linked parameter.
    ListDropHead { major: MajorId, field: u16 },
    /// Replace a two-link parameter by one of its child subtrees.
    TreeDropChild { major: MajorId, field: u16 },
}

impl CandKind {
    pub fn label(&self) -> String {
        match self {
            CandKind::ArrayDropFirst(m) => format!("array-drop-first:{m}"),
            CandKind::ArrayDropLast(m) => format!("array-drop-last:{m}"),
            CandKind::ArrayDropFirstAll => "array-drop-first-all".into(),
            CandKind::ListDropHead { major, .. } => format!("list-drop-head:{major}"),
            CandKind::TreeDropChild { major, field } => format!("tree-drop-child:{major}.{field}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TracePc {
    Active(InstrId),
    Failed(InstrId),
    Halted,
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AVal {
    Int(Term),
    /// `major == None` is the definite null element pointer. Record
    /// pointers always carry their summary major; their offset term is a
    /// node id, with -1 encoding null.
    Ptr { major: Option<MajorId>, off: Term },
}

impl AVal {
    pub fn term(&self) -> Term {
        match self {
            AVal::Int(t) => *t,
            AVal::Ptr { off, .. } => *off,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TraceState {
    pub pc: TracePc,
    /// None for the primary; the shrinking rule for shrunk traces.
    pub cand: Option<CandKind>,
    /// Locked traces mirror every primary step; unlocked ones re-seek a
    /// correspondence at loop boundaries.
    pub locked: bool,
    pub locals: Vec<Option<AVal>>,
    pub objs: BTreeMap<(MajorId, u16), Term>,
    pub size: Term,
    /// Per-instruction execution counts, naming mid-trace values.
    pub occ: BTreeMap<InstrId, u16>,
    /// Completed laps per loop for this trace, reset on loop entry. The
    /// seek locks a shrunk trace exactly one lap behind the primary.
    pub iters: BTreeMap<LoopId, u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PathSym {
    Pc(InstrId),
    Star,
}

#[derive(Debug, Clone)]
pub struct Herd {
    pub traces: Vec<TraceState>,
    pub facts: Vec<Fact>,
    solver: Option<Solver>,
    pub path: Vec<PathSym>,
    /// Valid index window per (trace, array major): base plus length term.
    pub array_ext: BTreeMap<(u8, MajorId), (i64, Term)>,
    /// Node ids known pairwise distinct, per summary major.
    pub distinct_ids: BTreeMap<MajorId, Vec<Term>>,
    /// Load results taken from an untouched initial object (input spine),
    /// tagged by major. Initial-heap values never alias later allocations.
    pub init_selects: BTreeMap<Term, MajorId>,
    /// Ids minted by allocation, per major.
    pub allocs: BTreeMap<MajorId, Vec<Term>>,
    pub added_cands: BTreeSet<CandKind>,
    pub unroll: BTreeMap<LoopId, u32>,
    pub widened_loops: BTreeSet<LoopId>,
}

/// What `step` did, so the driver knows when to add shrunk traces, run
/// seeks, widen, or split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepEvent {
    Stepped,
    LoopIterDone(LoopId),
    NeedsSplit,
    Terminal,
}

/// Facts a branch asserts along each outcome. Structurally impossible
/// outcomes carry `FALSE_FACT`.
struct BranchFacts {
    then_facts: Vec<Fact>,
    else_facts: Vec<Fact>,
}

struct CheckPlan {
    pass: Vec<Fact>,
    /// Each entry is one violation flavor.
    fails: Vec<Vec<Fact>>,
}

const FALSE_FACT: Fact = Fact::Diff { x: Term::Zero, y: Term::Zero, c: -1 };

impl Herd {
    // ---- construction ----

    pub fn initial(ir: &ProgramIR, geo: &Geometry) -> Herd {
        let mut h = Herd {
            traces: Vec::new(),
            facts: Vec::new(),
            solver: Some(Solver::new()),
            path: Vec::new(),
            array_ext: BTreeMap::new(),
            distinct_ids: BTreeMap::new(),
            init_selects: BTreeMap::new(),
            allocs: BTreeMap::new(),
            added_cands: BTreeSet::new(),
            unroll: BTreeMap::new(),
            widened_loops: BTreeSet::new(),
        };
        let mut tr = TraceState {
            pc: TracePc::Active(0),
            cand: None,
            locked: true,
            locals: vec![None; geo.n_locals as usize],
            objs: BTreeMap::new(),
            size: Term::Init { t: 0, slot: geo.size_slot },
            occ: BTreeMap::new(),
            iters: BTreeMap::new(),
        };
        for p in &ir.params {
            match p {
                ParamShape::Scalar { local, ty } => {
                    let term = Term::Init { t: 0, slot: *local };
                    tr.locals[*local as usize] = Some(AVal::Int(term));
                    h.push_range(term, *ty);
                }
                ParamShape::ArrayRecord { data, len, .. } => {
                    let a = geo.arrays.iter().find(|a| a.data_local == *data).expect("array geometry");
                    tr.locals[*data as usize] = Some(AVal::Ptr { major: Some(a.major), off: Term::Zero });
                    let len_term = Term::RegionLen { t: 0, major: a.major };
                    tr.locals[*len as usize] = Some(AVal::Int(len_term));
                    // Input-size assumption: array lengths fit in int.
                    h.push_fact(Fact::ge_const(len_term, 0));
                    h.push_fact(Fact::le_const(len_term, IntTy::INT.max()));
                    tr.objs.insert((a.major, 0), Term::Init { t: 0, slot: geo.obj_slots[&(a.major, 0)] });
                    h.array_ext.insert((0, a.major), (0, len_term));
                }
                ParamShape::LinkedRecord { root, rec, .. } => {
                    let m = geo.summary_of[rec];
                    let root_term = Term::Init { t: 0, slot: *root };
                    tr.locals[*root as usize] = Some(AVal::Ptr { major: Some(m), off: root_term });
                    h.push_fact(Fact::ge_const(root_term, -1));
                    h.init_selects.insert(root_term, m);
                }
            }
        }
        // Summary objects exist for every record type.
        for (rid, rec) in ir.records.iter().enumerate() {
            let m = geo.summary_of[&(rid as RecordId)];
            for f in 0..rec.fields.len() as u16 {
                tr.objs.insert((m, f), Term::Init { t: 0, slot: geo.obj_slots[&(m, f)] });
            }
        }
        h.push_fact(Fact::ge_const(tr.size, 0));
        h.traces.push(tr);
        h
    }

    // ---- solver plumbing ----

    pub fn solver(&mut self) -> &mut Solver {
        if self.solver.is_none() {
            let mut s = Solver::new();
            s.assert_all(&self.facts);
            self.solver = Some(s);
        }
        self.solver.as_mut().unwrap()
    }

    /// Drop the solver (herds kept only for comparison don't carry one).
    pub fn strip(&mut self) {
        self.solver = None;
    }

    pub fn push_fact(&mut self, f: Fact) {
        self.solver().assert_fact(&f);
        self.facts.push(f);
    }

    fn push_range(&mut self, t: Term, ty: IntTy) {
        // 64-bit ranges would overflow difference weights; leave them free.
        if ty.bits >= 64 {
            return;
        }
        self.push_fact(Fact::ge_const(t, ty.min()));
        self.push_fact(Fact::le_const(t, ty.max()));
    }

    fn entailed(&mut self, f: &Fact) -> bool {
        self.solver().entails(f).is_yes()
    }

    fn all_entailed(&mut self, fs: &[Fact]) -> bool {
        fs.iter().all(|f| self.solver().entails(f).is_yes())
    }

    pub fn consistent(&mut self) -> bool {
        self.solver().consistent()
    }

    // ---- term helpers ----

    fn fresh(&mut self, t: usize, instr: InstrId) -> Term {
        let occ = self.traces[t].occ.entry(instr).or_insert(0);
        let term = Term::Fresh { t: t as u8, instr, occ: *occ };
        *occ += 1;
        term
    }

    fn int_term(&self, t: usize, op: &Operand) -> Term {
        match op {
            Operand::Const(c) => Term::Cst(*c),
            Operand::Local(l) => match &self.traces[t].locals[*l as usize] {
                Some(v) => v.term(),
                None => panic!("read of unassigned local {l} in abstract trace"),
            },
        }
    }

    fn aval(&self, t: usize, l: LocalId) -> &AVal {
        self.traces[t].locals[l as usize].as_ref().expect("read of unassigned local")
    }

    fn operand_aval(&self, ir: &ProgramIR, geo: &Geometry, t: usize, op: &Operand, dst_ty: ValTy) -> AVal {
        match (op, dst_ty) {
            (Operand::Const(c), ValTy::Int(_)) => AVal::Int(Term::Cst(*c)),
            (Operand::Const(c), ValTy::Ptr(Pointee::Record(r))) => {
                debug_assert_eq!(*c, 0, "only literal 0 converts to a pointer");
                AVal::Ptr { major: Some(geo.summary_of[&r]), off: Term::Cst(-1) }
            }
            (Operand::Const(c), ValTy::Ptr(Pointee::Elem(_))) => {
                debug_assert_eq!(*c, 0);
                AVal::Ptr { major: None, off: Term::Zero }
            }
            (Operand::Local(l), _) => {
                let _ = ir;
                self.aval(t, *l).clone()
            }
        }
    }

    fn exact_diff(&mut self, hi: Term, lo: Term, c: i64) {
        self.push_fact(Fact::diff(hi, lo, c));
        self.push_fact(Fact::diff(lo, hi, -c));
    }

    // ---- single-instruction execution (deterministic opcodes) ----

    /// Execute the instruction at trace `t`'s pc. The caller guarantees it
    /// is not a Branch/Check. `pairing` names the primary occurrence a
    /// nondet draw should copy, when one applies.
    fn exec_det(&mut self, ir: &ProgramIR, geo: &Geometry, opts: &DomainOpts, t: usize, mirror: bool) {
        let TracePc::Active(pc) = self.traces[t].pc else { return };
        let ins = ir.instrs[pc as usize].clone();
        let next = pc + 1;
        match ins {
            Instr::Assign { dst, src } => {
                let ty = ir.locals[dst as usize].ty;
                let v = self.operand_aval(ir, geo, t, &src, ty);
                self.traces[t].locals[dst as usize] = Some(v);
                self.traces[t].pc = TracePc::Active(next);
            }
            Instr::Unop { dst, op, src, ty } => {
                let s = self.int_term(t, &src);
                let out = self.exec_unop(t, pc, op, s, ty, opts);
                self.traces[t].locals[dst as usize] = Some(AVal::Int(out));
                self.traces[t].pc = TracePc::Active(next);
            }
            Instr::Binop { dst, op, a, b, ty } => {
                if op == BinOp::PtrAdd {
                    let Operand::Local(al) = a else { panic!("ptradd base must be a local") };
                    let base = self.aval(t, al).clone();
                    let AVal::Ptr { major, off } = base else { panic!("ptradd on non-pointer") };
                    let idx = self.int_term(t, &b);
                    let dst_off = self.fresh(t, pc);
                    let base_c = self.solver().const_of(off);
                    let idx_c = self.solver().const_of(idx);
                    if let Some(c) = base_c {
                        self.exact_diff(dst_off, idx, c);
                    } else if let Some(ci) = idx_c {
                        self.exact_diff(dst_off, off, ci);
                    } else {
                        self.push_fact(Fact::App { z: dst_off, op: AppOp::Add, a: off, b: idx });
                    }
                    self.traces[t].locals[dst as usize] = Some(AVal::Ptr { major, off: dst_off });
                } else {
                    let at = self.int_term(t, &a);
                    let bt = self.int_term(t, &b);
                    let out = self.exec_binop(t, pc, op, at, bt, ty, opts);
                    self.traces[t].locals[dst as usize] = Some(AVal::Int(out));
                }
                self.traces[t].pc = TracePc::Active(next);
            }
            Instr::Load { dst, addr, field } => {
                let AVal::Ptr { major, off } = self.aval(t, addr).clone() else {
                    panic!("load through a non-pointer")
                };
                let m = major.expect("null deref survives its guard");
                let f = field.unwrap_or(0);
                let obj = self.traces[t].objs[&(m, f)];
                let z = self.fresh(t, pc);
                self.push_fact(Fact::Select { z, obj, idx: off });
                match ir.locals[dst as usize].ty {
                    ValTy::Int(it) => {
                        self.push_range(z, it);
                        self.traces[t].locals[dst as usize] = Some(AVal::Int(z));
                    }
                    ValTy::Ptr(Pointee::Record(r)) => {
                        self.push_fact(Fact::ge_const(z, -1));
                        let zm = geo.summary_of[&r];
                        if self.init_member(off).is_some() && self.init_rooted(obj, off) {
                            self.init_selects.insert(z, zm);
                            for a in self.allocs.get(&zm).cloned().unwrap_or_default() {
                                self.push_fact(Fact::Ne(z, a));
                            }
                        }
                        self.traces[t].locals[dst as usize] =
                            Some(AVal::Ptr { major: Some(zm), off: z });
                    }
                    ValTy::Ptr(Pointee::Elem(_)) => panic!("element-pointer fields are rejected upstream"),
                }
                self.traces[t].pc = TracePc::Active(next);
            }
            Instr::Store { addr, field, val } => {
                let AVal::Ptr { major, off } = self.aval(t, addr).clone() else {
                    panic!("store through a non-pointer")
                };
                let m = major.expect("null deref survives its guard");
                let f = field.unwrap_or(0);
                let old = self.traces[t].objs[&(m, f)];
                // Stored value: null into a record field is id -1.
                let vt = match (&val, field) {
                    (Operand::Const(0), Some(fi)) => {
                        let is_rec = record_field_ty(ir, geo, m, fi)
                            .map(|ty| matches!(ty, ValTy::Ptr(Pointee::Record(_))))
                            .unwrap_or(false);
                        if is_rec {
                            Term::Cst(-1)
                        } else {
                            Term::Cst(0)
                        }
                    }
                    _ => self.int_term(t, &val),
                };
                let o2 = self.fresh(t, pc);
                self.push_fact(Fact::Store { z: o2, obj: old, idx: off, val: vt });
                self.traces[t].objs.insert((m, f), o2);
                self.traces[t].pc = TracePc::Active(next);
            }
            Instr::Alloc { dst, rec } => {
                let m = geo.summary_of[&rec];
                let id = self.fresh(t, pc);
                self.push_fact(Fact::ge_const(id, 0));
                let known = self.distinct_ids.get(&m).cloned().unwrap_or_default();
                for d in known {
                    self.push_fact(Fact::Ne(id, d));
                }
                self.distinct_ids.entry(m).or_default().push(id);
                // Fresh ids never alias initial-heap values of this major.
                let inits: Vec<Term> =
                    self.init_selects.iter().filter(|&(_, im)| *im == m).map(|(s, _)| *s).collect();
                for s in inits {
                    if s != id {
                        self.push_fact(Fact::Ne(id, s));
                    }
                }
                self.allocs.entry(m).or_default().push(id);
                self.traces[t].locals[dst as usize] = Some(AVal::Ptr { major: Some(m), off: id });
                let s2 = self.fresh(t, pc);
                let old = self.traces[t].size;
                self.exact_diff(s2, old, 1);
                self.push_fact(Fact::ge_const(s2, 0));
                self.traces[t].size = s2;
                self.traces[t].pc = TracePc::Active(next);
            }
            Instr::Nondet { dst, ty } => {
                let occ_used = *self.traces[t].occ.get(&pc).unwrap_or(&0);
                let z = self.fresh(t, pc);
                self.push_range(z, ty);
                // A shrunk trace may copy the primary's draw for the same
                // occurrence: the shrunk execution is an existential
                // witness, so any fixed choice is sound.
                if t != 0 {
                    let prim_occ = *self.traces[0].occ.get(&pc).unwrap_or(&0);
                    let target = if mirror { prim_occ.checked_sub(1) } else { Some(occ_used) };
                    if let Some(po) = target {
                        if po < prim_occ || (mirror && prim_occ > 0) {
                            let po = po.min(prim_occ.saturating_sub(1));
                            self.push_fact(Fact::Eq(z, Term::Fresh { t: 0, instr: pc, occ: po }));
                        }
                    }
                }
                self.traces[t].locals[dst as usize] = Some(AVal::Int(z));
                self.traces[t].pc = TracePc::Active(next);
            }
            Instr::Jump { target } => {
                self.traces[t].pc = TracePc::Active(target);
            }
            Instr::Fail => {
                self.traces[t].pc = TracePc::Failed(pc);
            }
            Instr::Halt => {
                self.traces[t].pc = TracePc::Halted;
            }
            Instr::Ignore => {
                self.traces[t].pc = TracePc::Ignored;
            }
            Instr::LoopEnter { id } => {
                self.traces[t].iters.insert(id, 0);
                self.traces[t].pc = TracePc::Active(next);
            }
            Instr::LoopIter { id } => {
                *self.traces[t].iters.entry(id).or_insert(0) += 1;
                self.traces[t].pc = TracePc::Active(next);
            }
            Instr::LoopEnd { .. } => {
                self.traces[t].pc = TracePc::Active(next);
            }
            Instr::Branch { .. } | Instr::Check { .. } => {
                unreachable!("splitting opcodes are resolved by the caller")
            }
        }
    }

    fn exec_unop(&mut self, t: usize, pc: InstrId, op: UnOp, s: Term, ty: IntTy, opts: &DomainOpts) -> Term {
        match op {
            UnOp::Neg | UnOp::BitNot => {
                let raw = self.fresh(t, pc);
                let wrapped = self.fresh(t, pc);
                let sc = self.solver().const_of(s);
                match (op, sc) {
                    (UnOp::Neg, Some(c)) => self.exact_diff(raw, Term::Zero, c.wrapping_neg()),
                    (UnOp::BitNot, Some(c)) => self.exact_diff(raw, Term::Zero, !c),
                    (UnOp::Neg, None) => {
                        self.push_fact(Fact::App { z: raw, op: AppOp::Neg, a: s, b: Term::Zero });
                        let lo = self.lower_bound(s);
                        let hi = self.upper_bound(s);
                        if let Some(h) = hi {
                            self.push_fact(Fact::ge_const(raw, h.wrapping_neg()));
                        }
                        if let Some(l) = lo {
                            self.push_fact(Fact::le_const(raw, l.wrapping_neg()));
                        }
                    }
                    (UnOp::BitNot, None) => {
                        self.push_fact(Fact::App { z: raw, op: AppOp::BitNot, a: s, b: Term::Zero });
                        // ~x = -x - 1, exactly.
                        let lo = self.lower_bound(s);
                        let hi = self.upper_bound(s);
                        if let Some(h) = hi {
                            self.push_fact(Fact::ge_const(raw, -h - 1));
                        }
                        if let Some(l) = lo {
                            self.push_fact(Fact::le_const(raw, -l - 1));
                        }
                    }
                    _ => unreachable!(),
                }
                self.apply_width(raw, wrapped, ty, opts)
            }
            UnOp::Not => {
                let z = self.fresh(t, pc);
                self.push_fact(Fact::ge_const(z, 0));
                self.push_fact(Fact::le_const(z, 1));
                if let Some(c) = self.solver().const_of(s) {
                    let v = i64::from(c == 0);
                    self.exact_diff(z, Term::Zero, v);
                } else if self.entailed(&Fact::Ne(s, Term::Cst(0))) {
                    self.exact_diff(z, Term::Zero, 0);
                }
                z
            }
            UnOp::Cast => {
                let wrapped = self.fresh(t, pc);
                self.solver().apply_width_semantics(s, wrapped, ty)
            }
        }
    }

    fn exec_binop(
        &mut self,
        t: usize,
        pc: InstrId,
        op: BinOp,
        a: Term,
        b: Term,
        ty: IntTy,
        opts: &DomainOpts,
    ) -> Term {
        let raw = self.fresh(t, pc);
        let wrapped = self.fresh(t, pc);
        let ca = self.solver().const_of(a);
        let cb = self.solver().const_of(b);
        match (op, ca, cb) {
            (BinOp::Add, _, Some(c)) => self.exact_diff(raw, a, c),
            (BinOp::Add, Some(c), _) => self.exact_diff(raw, b, c),
            (BinOp::Sub, _, Some(c)) => self.exact_diff(raw, a, -c),
            _ => {
                let app_op = match op {
                    BinOp::Add => AppOp::Add,
                    BinOp::Sub => AppOp::Sub,
                    BinOp::Mul => AppOp::Mul,
                    BinOp::Div => AppOp::Div,
                    BinOp::Rem => AppOp::Rem,
                    BinOp::BitAnd => AppOp::BitAnd,
                    BinOp::BitOr => AppOp::BitOr,
                    BinOp::BitXor => AppOp::BitXor,
                    BinOp::Shl => AppOp::Shl,
                    BinOp::Shr => AppOp::Shr,
                    BinOp::PtrAdd => unreachable!(),
                };
                self.push_fact(Fact::App { z: raw, op: app_op, a, b });
                self.bound_app(raw, op, a, b);
            }
        }
        self.apply_width(raw, wrapped, ty, opts)
    }

    /// Cheap interval reasoning for symbolic arithmetic.
    fn bound_app(&mut self, raw: Term, op: BinOp, a: Term, b: Term) {
        let (alo, ahi) = (self.lower_bound(a), self.upper_bound(a));
        let (blo, bhi) = (self.lower_bound(b), self.upper_bound(b));
        let add = |x: Option<i64>, y: Option<i64>| x.zip(y).and_then(|(x, y)| x.checked_add(y));
        match op {
            BinOp::Add => {
                if let Some(l) = add(alo, blo) {
                    self.push_fact(Fact::ge_const(raw, l));
                }
                if let Some(h) = add(ahi, bhi) {
                    self.push_fact(Fact::le_const(raw, h));
                }
            }
            BinOp::Sub => {
                if let Some(l) = alo.zip(bhi).and_then(|(x, y)| x.checked_sub(y)) {
                    self.push_fact(Fact::ge_const(raw, l));
                }
                if let Some(h) = ahi.zip(blo).and_then(|(x, y)| x.checked_sub(y)) {
                    self.push_fact(Fact::le_const(raw, h));
                }
            }
            BinOp::Mul => {
                if let (Some(al), Some(ah), Some(bl), Some(bh)) = (alo, ahi, blo, bhi) {
                    let cands = [al.checked_mul(bl), al.checked_mul(bh), ah.checked_mul(bl), ah.checked_mul(bh)];
                    if cands.iter().all(|c| c.is_some()) {
                        let vals: Vec<i64> = cands.iter().map(|c| c.unwrap()).collect();
                        self.push_fact(Fact::ge_const(raw, *vals.iter().min().unwrap()));
                        self.push_fact(Fact::le_const(raw, *vals.iter().max().unwrap()));
                    }
                }
            }
            BinOp::Rem => {
                // |a % b| < |b| and sign follows the dividend.
                if let (Some(bl), Some(bh)) = (blo, bhi) {
                    let m = bh.abs().max(bl.abs());
                    if m > 0 {
                        self.push_fact(Fact::ge_const(raw, -(m - 1)));
                        self.push_fact(Fact::le_const(raw, m - 1));
                        if alo.is_some_and(|l| l >= 0) {
                            self.push_fact(Fact::ge_const(raw, 0));
                        }
                    }
                }
            }
            BinOp::Div => {
                if alo.is_some_and(|l| l >= 0) && blo.is_some_and(|l| l >= 1) {
                    self.push_fact(Fact::ge_const(raw, 0));
                    if let Some(h) = ahi {
                        self.push_fact(Fact::le_const(raw, h));
                    }
                }
            }
            BinOp::Shr => {
                if alo.is_some_and(|l| l >= 0) {
                    self.push_fact(Fact::ge_const(raw, 0));
                    if let Some(h) = ahi {
                        self.push_fact(Fact::le_const(raw, h));
                    }
                }
            }
            BinOp::BitAnd => {
                if alo.is_some_and(|l| l >= 0) || blo.is_some_and(|l| l >= 0) {
                    self.push_fact(Fact::ge_const(raw, 0));
                    let h = match (ahi, bhi, alo.map(|l| l >= 0), blo.map(|l| l >= 0)) {
                        (Some(x), Some(y), Some(true), Some(true)) => Some(x.min(y)),
                        (Some(x), _, Some(true), _) => Some(x),
                        (_, Some(y), _, Some(true)) => Some(y),
                        _ => None,
                    };
                    if let Some(h) = h {
                        self.push_fact(Fact::le_const(raw, h));
                    }
                }
            }
            _ => {}
        }
    }

    fn lower_bound(&mut self, x: Term) -> Option<i64> {
        self.solver().tightest(Term::Zero, x).map(|c| -c)
    }

    fn upper_bound(&mut self, x: Term) -> Option<i64> {
        self.solver().tightest(x, Term::Zero)
    }

    fn apply_width(&mut self, raw: Term, wrapped: Term, ty: IntTy, opts: &DomainOpts) -> Term {
        if ty.signed && !opts.overflow_checks {
            // Signed overflow is undefined, so the result is in range.
            if ty.bits < 64 {
                self.push_fact(Fact::ge_const(raw, ty.min()));
                self.push_fact(Fact::le_const(raw, ty.max()));
            }
            raw
        } else {
            self.solver().apply_width_semantics(raw, wrapped, ty)
        }
    }

    // ---- branch and check outcome planning ----

    /// Outcome facts for a branch, on trace `t`'s own terms.
    fn branch_outcomes(&mut self, ir: &ProgramIR, geo: &Geometry, t: usize, op: CmpOp, a: &Operand, b: &Operand)
        -> BranchFacts
    {
        let pa = self.ptr_operand(ir, geo, t, a);
        let pb = self.ptr_operand(ir, geo, t, b);
        match (pa, pb) {
            (None, None) => {
                let at = self.int_term(t, a);
                let bt = self.int_term(t, b);
                BranchFacts {
                    then_facts: cmp_facts(op, at, bt),
                    else_facts: cmp_facts(op.negate(), at, bt),
                }
            }
            (pa, pb) => {
                // Outcome facts of pointer equality against null of the
                // matching kind. Array-region pointers are never null by
                // the input contract; record pointers encode null as the
                // node id -1.
                let vs_null = |m: Option<MajorId>, off: Term| -> (Vec<Fact>, Vec<Fact>) {
                    match m {
                        None => (vec![], vec![FALSE_FACT]),
                        Some(m) if geo.array_by_major(m).is_some() => (vec![FALSE_FACT], vec![]),
                        Some(_) => (vec![Fact::Eq(off, Term::Cst(-1))], vec![Fact::ge_const(off, 0)]),
                    }
                };
                let (eq, ne): (Vec<Fact>, Vec<Fact>) = match (pa, pb) {
                    // The frontend only admits pointer-vs-pointer and
                    // pointer-vs-literal-0 comparisons.
                    (Some((m, off)), None) | (None, Some((m, off))) => vs_null(m, off),
                    (Some((mx, ox)), Some((my, oy))) => match (mx, my) {
                        (Some(m1), Some(m2)) if m1 == m2 => {
                            (vec![Fact::Eq(ox, oy)], vec![Fact::Ne(ox, oy)])
                        }
                        (None, None) => (vec![], vec![FALSE_FACT]),
                        (None, Some(m)) => vs_null(Some(m), oy),
                        (Some(m), None) => vs_null(Some(m), ox),
                        // Distinct regions never alias.
                        (Some(_), Some(_)) => (vec![FALSE_FACT], vec![]),
                    },
                    (None, None) => unreachable!("handled above"),
                };
                match op {
                    CmpOp::Eq => BranchFacts { then_facts: eq, else_facts: ne },
                    CmpOp::Ne => BranchFacts { then_facts: ne, else_facts: eq },
                    _ => panic!("ordered pointer comparison"),
                }
            }
        }
    }

    /// If the operand is a pointer, its (major, off); record-pointer null
    /// literals read as (their major unknown ⇒ None, id -1 via operand).
    #[allow(clippy::type_complexity)]
    fn ptr_operand(&self, ir: &ProgramIR, _geo: &Geometry, t: usize, op: &Operand)
        -> Option<(Option<MajorId>, Term)>
    {
        match op {
            Operand::Local(l) => match ir.locals[*l as usize].ty {
                ValTy::Ptr(_) => match self.aval(t, *l) {
                    AVal::Ptr { major, off } => Some((*major, *off)),
                    AVal::Int(_) => panic!("pointer local bound to an integer"),
                },
                ValTy::Int(_) => None,
            },
            Operand::Const(_) => None,
        }
    }

    /// Whether a branch compares a pointer local against the 0 literal;
    /// such comparisons treat the literal as null of the matching kind.
    fn null_compare(&self, ir: &ProgramIR, t: usize, a: &Operand, b: &Operand)
        -> Option<(Option<MajorId>, Term, bool)>
    {
        let classify = |o: &Operand| -> Option<(Option<MajorId>, Term)> {
            if let Operand::Local(l) = o {
                if matches!(ir.locals[*l as usize].ty, ValTy::Ptr(_)) {
                    if let AVal::Ptr { major, off } = self.aval(t, *l) {
                        return Some((*major, *off));
                    }
                }
            }
            None
        };
        match (classify(a), classify(b), a, b) {
            (Some((m, o)), None, _, Operand::Const(0)) => Some((m, o, true)),
            (None, Some((m, o)), Operand::Const(0), _) => Some((m, o, true)),
            _ => None,
        }
    }

    fn check_plan(&mut self, _geo: &Geometry, t: usize, kind: &CheckKind, opts: &DomainOpts, pc: InstrId)
        -> CheckPlan
    {
        match kind {
            CheckKind::Deref { addr, field } => {
                let AVal::Ptr { major, off } = self.aval(t, *addr).clone() else {
                    panic!("deref check on a non-pointer")
                };
                let _ = field;
                match major {
                    None => CheckPlan { pass: vec![FALSE_FACT], fails: vec![vec![]] },
                    Some(m) => {
                        if let Some(&(base, len)) = self.array_ext.get(&(t as u8, m)) {
                            CheckPlan {
                                pass: vec![
                                    Fact::diff(Term::Cst(base), off, 0),
                                    Fact::diff(off, len, base - 1),
                                ],
                                fails: vec![
                                    vec![Fact::diff(off, Term::Cst(base), -1)],
                                    vec![Fact::diff(len, off, -base)],
                                ],
                            }
                        } else {
                            // Summary pointer: valid node ids are ≥ 0.
                            CheckPlan {
                                pass: vec![Fact::ge_const(off, 0)],
                                fails: vec![vec![Fact::Eq(off, Term::Cst(-1))]],
                            }
                        }
                    }
                }
            }
            CheckKind::DivNonZero { divisor } => {
                let d = self.int_term(t, divisor);
                CheckPlan { pass: vec![Fact::Ne(d, Term::Cst(0))], fails: vec![vec![Fact::Eq(d, Term::Cst(0))]] }
            }
            CheckKind::NoOverflow { op, a, b, ty } => {
                let at = self.int_term(t, a);
                let bt = self.int_term(t, b);
                // Mirror the following binop's raw computation so the two
                // raw names unify in the store.
                let raw = self.exec_binop_raw(t, pc, *op, at, bt);
                let _ = opts;
                CheckPlan {
                    pass: vec![Fact::ge_const(raw, ty.min()), Fact::le_const(raw, ty.max())],
                    fails: vec![
                        vec![Fact::ge_const(raw, ty.max().saturating_add(1))],
                        vec![Fact::le_const(raw, ty.min().saturating_sub(1))],
                    ],
                }
            }
        }
    }

    /// The raw-result construction shared by overflow checks and binops.
    fn exec_binop_raw(&mut self, t: usize, pc: InstrId, op: BinOp, a: Term, b: Term) -> Term {
        let raw = self.fresh(t, pc);
        let ca = self.solver().const_of(a);
        let cb = self.solver().const_of(b);
        match (op, ca, cb) {
            (BinOp::Add, _, Some(c)) => self.exact_diff(raw, a, c),
            (BinOp::Add, Some(c), _) => self.exact_diff(raw, b, c),
            (BinOp::Sub, _, Some(c)) => self.exact_diff(raw, a, -c),
            _ => {
                let app_op = match op {
                    BinOp::Add => AppOp::Add,
                    BinOp::Sub => AppOp::Sub,
                    BinOp::Mul => AppOp::Mul,
                    _ => AppOp::Add,
                };
                self.push_fact(Fact::App { z: raw, op: app_op, a, b });
                self.bound_app(raw, op, a, b);
            }
        }
        raw
    }

    // ---- the step/split interface ----

    pub fn primary_pc(&self) -> TracePc {
        self.traces[0].pc
    }

    /// True when the primary's next opcode needs outcome resolution.
    pub fn needs_split(&self, ir: &ProgramIR) -> bool {
        match self.traces[0].pc {
            TracePc::Active(pc) => matches!(ir.instrs[pc as usize], Instr::Branch { .. } | Instr::Check { .. }),
            _ => false,
        }
    }

    /// Execute one deterministic primary instruction and mirror it onto
    /// locked shrunk traces.
    pub fn step(&mut self, ir: &ProgramIR, geo: &Geometry, opts: &DomainOpts) -> StepEvent {
        let TracePc::Active(pc) = self.traces[0].pc else { return StepEvent::Terminal };
        let ins = ir.instrs[pc as usize].clone();
        if matches!(ins, Instr::Branch { .. } | Instr::Check { .. }) {
            return StepEvent::NeedsSplit;
        }
        if let Instr::LoopEnter { id } = ins {
            self.path.push(PathSym::Pc(pc));
            self.unroll.insert(id, 0);
            self.widened_loops.remove(&id);
        }
        self.exec_det(ir, geo, opts, 0, false);
        for t in 1..self.traces.len() {
            if self.traces[t].locked && matches!(self.traces[t].pc, TracePc::Active(p) if p == pc) {
                self.exec_det(ir, geo, opts, t, true);
            }
        }
        match ins {
            Instr::LoopEnter { .. } => {
                // Each loop establishes its own lag; start every shrunk
                // trace seeking again.
                for t in 1..self.traces.len() {
                    self.traces[t].locked = false;
                }
                StepEvent::Stepped
            }
            Instr::LoopIter { id } => {
                *self.unroll.entry(id).or_insert(0) += 1;
                StepEvent::LoopIterDone(id)
            }
            Instr::Fail | Instr::Halt | Instr::Ignore => StepEvent::Terminal,
            _ => {
                if matches!(self.traces[0].pc, TracePc::Active(_)) {
                    StepEvent::Stepped
                } else {
                    StepEvent::Terminal
                }
            }
        }
    }

    /// Resolve the primary's branch/check into feasible children. Locked
    /// shrunk traces follow an outcome only when it is entailed for them;
    /// otherwise they unlock (or, for violated checks, fail in place).
    pub fn split(&mut self, ir: &ProgramIR, geo: &Geometry, opts: &DomainOpts) -> Vec<Herd> {
        let TracePc::Active(pc) = self.traces[0].pc else { return vec![] };
        let mut out = Vec::new();
        match ir.instrs[pc as usize].clone() {
            Instr::Branch { op, a, b, then_t, else_t } => {
                let null_info = self.null_compare(ir, 0, &a, &b);
                let BranchFacts { then_facts, else_facts } = self.branch_outcomes(ir, geo, 0, op, &a, &b);
                for (facts, target, taken_then) in
                    [(then_facts, then_t, true), (else_facts, else_t, false)]
                {
                    let mut child = self.clone();
                    for f in &facts {
                        child.push_fact(*f);
                    }
                    if !child.consistent() {
                        dlog!("split: branch child at pc {pc} toward {target} infeasible");
                        continue;
                    }
                    child.traces[0].pc = TracePc::Active(target);
                    child.path.push(PathSym::Pc(target));
                    // A non-null resolution of an input-spine id yields a
                    // new provably distinct node (inputs are acyclic and
                    // unshared).
                    if let Some((Some(m), off, _)) = null_info {
                        let nonnull_then = matches!(op, CmpOp::Ne);
                        if taken_then == nonnull_then
                            && child.init_member(off).is_some()
                            && geo.array_by_major(m).is_none()
                        {
                            child.note_distinct(m, off);
                        }
                    }
                    child.mirror_branch(ir, geo, op, &a, &b, taken_then, target);
                    out.push(child);
                }
            }
            Instr::Check { kind } => {
                let plan = self.check_plan(geo, 0, &kind, opts, pc);
                // Pass child.
                let mut pass = self.clone();
                for f in &plan.pass {
                    pass.push_fact(*f);
                }
                if pass.consistent() {
                    pass.traces[0].pc = TracePc::Active(pc + 1);
                    pass.mirror_check(ir, geo, opts, &kind, pc, None);
                    out.push(pass);
                }
                for (i, vf) in plan.fails.iter().enumerate() {
                    let mut fail = self.clone();
                    for f in vf {
                        fail.push_fact(*f);
                    }
                    if !fail.consistent() {
                        continue;
                    }
                    fail.traces[0].pc = TracePc::Failed(pc);
                    fail.mirror_check(ir, geo, opts, &kind, pc, Some(i));
                    out.push(fail);
                }
            }
            _ => panic!("split called on a deterministic opcode"),
        }
        out
    }

    fn mirror_branch(
        &mut self,
        ir: &ProgramIR,
        geo: &Geometry,
        op: CmpOp,
        a: &Operand,
        b: &Operand,
        taken_then: bool,
        target: InstrId,
    ) {
        for t in 1..self.traces.len() {
            if !self.traces[t].locked || !matches!(self.traces[t].pc, TracePc::Active(_)) {
                continue;
            }
            let BranchFacts { then_facts, else_facts } = self.branch_outcomes(ir, geo, t, op, a, b);
            let want = if taken_then { then_facts } else { else_facts };
            let follow = !want.contains(&FALSE_FACT) && self.all_entailed(&want);
            if follow {
                self.traces[t].pc = TracePc::Active(target);
            } else {
                self.traces[t].locked = false;
                if log_on() {
                    let detail: Vec<String> = want
                        .iter()
                        .map(|f| format!("{f:?}={:?}", self.entailed(f)))
                        .collect();
                    dlog!("mirror: trace {t} unlocked at branch toward pc {target}: {}", detail.join(", "));
                }
            }
        }
    }

    fn mirror_check(
        &mut self,
        ir: &ProgramIR,
        geo: &Geometry,
        opts: &DomainOpts,
        kind: &CheckKind,
        pc: InstrId,
        fail_variant: Option<usize>,
    ) {
        let _ = ir;
        for t in 1..self.traces.len() {
            if !self.traces[t].locked || !matches!(self.traces[t].pc, TracePc::Active(_)) {
                continue;
            }
            let plan = self.check_plan(geo, t, kind, opts, pc);
            match fail_variant {
                None => {
                    if !plan.pass.contains(&FALSE_FACT) && self.all_entailed(&plan.pass) {
                        self.traces[t].pc = TracePc::Active(pc + 1);
                    } else {
                        self.traces[t].locked = false;
                        dlog!("mirror: trace {t} unlocked at check pc {pc} (pass not entailed)");
                    }
                }
                Some(_) => {
                    // Any entailed violation flavor fails the shrunk trace
                    // at the same instruction.
                    let failed = plan
                        .fails
                        .iter()
                        .any(|vf| !vf.is_empty() && !vf.contains(&FALSE_FACT) && self.all_entailed(vf))
                        || plan.pass.contains(&FALSE_FACT);
                    if failed {
                        self.traces[t].pc = TracePc::Failed(pc);
                        dlog!("mirror: trace {t} co-fails at check pc {pc}");
                    } else {
                        self.traces[t].locked = false;
                        dlog!("mirror: trace {t} unlocked at failing check pc {pc} (violation not entailed)");
                    }
                }
            }
        }
    }

    /// Membership in the initial heap, up to entailed equality: a term the
    /// solver proves equal to a known initial-heap value is one. Hits found
    /// by entailment are cached so later syntactic lookups and renames see
    /// them.
    fn init_member(&mut self, x: Term) -> Option<MajorId> {
        if let Some(m) = self.init_selects.get(&x) {
            return Some(*m);
        }
        let pairs: Vec<(Term, MajorId)> = self.init_selects.iter().map(|(s, m)| (*s, *m)).collect();
        for (s, m) in pairs {
            if self.entailed(&Fact::Eq(x, s)) {
                self.init_selects.insert(x, m);
                return Some(m);
            }
        }
        None
    }

    /// True when reading `obj` at `idx` provably reads the untouched
    /// initial object: every store between `obj` and an initial object
    /// lands at an index provably different from `idx`.
    fn init_rooted(&mut self, mut obj: Term, idx: Term) -> bool {
        for _ in 0..8 {
            if matches!(obj, Term::Init { .. }) {
                return true;
            }
            let mut def = None;
            for f in &self.facts {
                if let Fact::Store { z, obj: base, idx: at, .. } = f {
                    if *z == obj {
                        def = Some((*base, *at));
                        break;
                    }
                }
            }
            let Some((base, at)) = def else { return false };
            if !self.entailed(&Fact::Ne(idx, at)) {
                return false;
            }
            obj = base;
        }
        false
    }

    fn note_distinct(&mut self, m: MajorId, id: Term) {
        let known = self.distinct_ids.entry(m).or_default().clone();
        if known.contains(&id) {
            return;
        }
        for d in known {
            if d != id {
                self.push_fact(Fact::Ne(id, d));
            }
        }
        self.distinct_ids.entry(m).or_default().push(id);
    }

    // ---- shrunk-trace management ----

    /// All shrinking rules the program's parameters admit.
    pub fn enumerate_candidates(geo: &Geometry) -> Vec<CandKind> {
        let mut out = Vec::new();
        for a in &geo.arrays {
            out.push(CandKind::ArrayDropFirst(a.major));
            out.push(CandKind::ArrayDropLast(a.major));
        }
        if geo.arrays.len() >= 2 {
            out.push(CandKind::ArrayDropFirstAll);
        }
        for l in &geo.linked {
            match l.self_fields.len() {
                1 => out.push(CandKind::ListDropHead { major: l.major, field: l.self_fields[0] }),
                2 => {
                    for &f in &l.self_fields {
                        out.push(CandKind::TreeDropChild { major: l.major, field: f });
                    }
                }
                _ => {}
            }
        }
        out
    }

    /// Existence of the shrunk input must be entailed before the trace is
    /// added; candidates re-try at every loop boundary.
    pub fn maybe_add_shrunk(&mut self, ir: &ProgramIR, geo: &Geometry, opts: &DomainOpts) -> Vec<CandKind> {
        if opts.classic || self.traces.len() >= 200 {
            return vec![];
        }
        let mut added = Vec::new();
        for cand in Self::enumerate_candidates(geo) {
            if self.added_cands.contains(&cand) {
                continue;
            }
            let exists = match cand {
                CandKind::ArrayDropFirst(m) | CandKind::ArrayDropLast(m) => {
                    self.entailed(&Fact::ge_const(Term::RegionLen { t: 0, major: m }, 1))
                }
                CandKind::ArrayDropFirstAll => geo
                    .arrays
                    .iter()
                    .map(|a| Fact::ge_const(Term::RegionLen { t: 0, major: a.major }, 1))
                    .collect::<Vec<_>>()
                    .iter()
                    .all(|f| self.entailed(f)),
                CandKind::ListDropHead { major, .. } | CandKind::TreeDropChild { major, .. } => {
                    let root = geo
                        .linked
                        .iter()
                        .find(|l| l.major == major)
                        .map(|l| Term::Init { t: 0, slot: l.root_local })
                        .expect("linked geometry");
                    self.entailed(&Fact::ge_const(root, 0))
                }
            };
            if exists {
                self.add_shrunk(ir, geo, cand);
                added.push(cand);
            }
        }
        added
    }

    fn add_shrunk(&mut self, ir: &ProgramIR, geo: &Geometry, cand: CandKind) {
        let t = self.traces.len() as u8;
        let mut tr = TraceState {
            pc: TracePc::Active(0),
            cand: Some(cand),
            locked: false,
            locals: vec![None; geo.n_locals as usize],
            objs: BTreeMap::new(),
            size: Term::Init { t, slot: geo.size_slot },
            occ: BTreeMap::new(),
            iters: BTreeMap::new(),
        };
        // Default: the shrunk input shares every parameter with the
        // primary's initial state.
        for p in &ir.params {
            match p {
                ParamShape::Scalar { local, .. } => {
                    tr.locals[*local as usize] = Some(AVal::Int(Term::Init { t: 0, slot: *local }));
                }
                ParamShape::ArrayRecord { data, len, .. } => {
                    let a = geo.arrays.iter().find(|a| a.data_local == *data).expect("array geometry");
                    tr.locals[*data as usize] = Some(AVal::Ptr { major: Some(a.major), off: Term::Zero });
                    tr.locals[*len as usize] = Some(AVal::Int(Term::RegionLen { t: 0, major: a.major }));
                    self.array_ext.insert((t, a.major), (0, Term::RegionLen { t: 0, major: a.major }));
                    tr.objs.insert((a.major, 0), Term::Init { t: 0, slot: geo.obj_slots[&(a.major, 0)] });
                }
                ParamShape::LinkedRecord { root, rec, .. } => {
                    let m = geo.summary_of[rec];
                    tr.locals[*root as usize] =
                        Some(AVal::Ptr { major: Some(m), off: Term::Init { t: 0, slot: *root } });
                }
            }
        }
        for (rid, rec) in ir.records.iter().enumerate() {
            let m = geo.summary_of[&(rid as RecordId)];
            for f in 0..rec.fields.len() as u16 {
                tr.objs.insert((m, f), Term::Init { t: 0, slot: geo.obj_slots[&(m, f)] });
            }
        }
        let primary_size0 = Term::Init { t: 0, slot: geo.size_slot };
        let size_t = tr.size;

        let drop_first = |h: &mut Herd, tr: &mut TraceState, m: MajorId| {
            let a = geo.array_by_major(m).expect("array major").clone();
            let own_len = Term::RegionLen { t, major: m };
            tr.locals[a.data_local as usize] = Some(AVal::Ptr { major: Some(m), off: Term::Cst(1) });
            tr.locals[a.len_local as usize] = Some(AVal::Int(own_len));
            h.array_ext.insert((t, m), (1, own_len));
            let prim_len = Term::RegionLen { t: 0, major: m };
            h.push_fact(Fact::diff(own_len, prim_len, -1));
            h.push_fact(Fact::diff(prim_len, own_len, 1));
            let obj = Term::Init { t: 0, slot: geo.obj_slots[&(m, 0)] };
            // Trivial self-agreement on the kept window seeds the rules
            // that carry agreement through paired and out-of-window
            // stores.
            h.push_fact(Fact::Agree { a: obj, b: obj, lo: Bound::konst(1), hi: Bound::of(prim_len, 0) });
        };

        match cand {
            CandKind::ArrayDropFirst(m) => drop_first(self, &mut tr, m),
            CandKind::ArrayDropFirstAll => {
                let majors: Vec<MajorId> = geo.arrays.iter().map(|a| a.major).collect();
                for m in majors {
                    drop_first(self, &mut tr, m);
                }
            }
            CandKind::ArrayDropLast(m) => {
                let a = geo.array_by_major(m).expect("array major").clone();
                let own_len = Term::RegionLen { t, major: m };
                tr.locals[a.len_local as usize] = Some(AVal::Int(own_len));
                self.array_ext.insert((t, m), (0, own_len));
                let prim_len = Term::RegionLen { t: 0, major: m };
                self.push_fact(Fact::diff(own_len, prim_len, -1));
                self.push_fact(Fact::diff(prim_len, own_len, 1));
                let obj = Term::Init { t: 0, slot: geo.obj_slots[&(m, 0)] };
                self.push_fact(Fact::Agree { a: obj, b: obj, lo: Bound::konst(0), hi: Bound::of(own_len, 0) });
            }
            CandKind::ListDropHead { major, field } => {
                let l = geo.linked.iter().find(|l| l.major == major).expect("linked geometry");
                let prim_root = Term::Init { t: 0, slot: l.root_local };
                let own_root = Term::Init { t, slot: l.root_local };
                let next_obj = Term::Init { t: 0, slot: geo.obj_slots[&(major, field)] };
                self.push_fact(Fact::Select { z: own_root, obj: next_obj, idx: prim_root });
                self.push_fact(Fact::ge_const(own_root, -1));
                tr.locals[l.root_local as usize] = Some(AVal::Ptr { major: Some(major), off: own_root });
                self.init_selects.insert(own_root, major);
            }
            CandKind::TreeDropChild { major, field } => {
                let l = geo.linked.iter().find(|l| l.major == major).expect("linked geometry");
                let prim_root = Term::Init { t: 0, slot: l.root_local };
                let own_root = Term::Init { t, slot: l.root_local };
                let child_obj = Term::Init { t: 0, slot: geo.obj_slots[&(major, field)] };
                self.push_fact(Fact::Select { z: own_root, obj: child_obj, idx: prim_root });
                self.push_fact(Fact::ge_const(own_root, -1));
                tr.locals[l.root_local as usize] = Some(AVal::Ptr { major: Some(major), off: own_root });
                self.init_selects.insert(own_root, major);
            }
        }

        // Size relation. Subtree drops lose the sibling subtree too, so
        // only one direction is exact.
        self.push_fact(Fact::ge_const(size_t, 0));
        self.push_fact(Fact::diff(size_t, primary_size0, -1));
        if !matches!(cand, CandKind::TreeDropChild { .. }) {
            self.push_fact(Fact::diff(primary_size0, size_t, 1));
        }

        self.added_cands.insert(cand);
        self.traces.push(tr);
    }

    /// Advance unlocked shrunk traces toward the primary's position,
    /// locking when the program counter and the loop's assigned locals
    /// correspond. Returns the candidates that locked this round.
    pub fn run_seek(&mut self, ir: &ProgramIR, geo: &Geometry, opts: &DomainOpts, loop_id: LoopId) -> Vec<CandKind> {
        let Some(lm) = ir.loops.iter().find(|l| l.id == loop_id) else { return vec![] };
        let relevant = lm.relevant.clone();
        let TracePc::Active(prim_pc) = self.traces[0].pc else { return vec![] };
        // Lag discipline: a shrunk trace locks exactly one lap behind the
        // primary. Stepping past that alignment would lose it for good, so
        // a trace that reaches the lag without corresponding just waits
        // for the next boundary.
        let target = self.traces[0].iters.get(&loop_id).copied().unwrap_or(0).saturating_sub(1);
        let mut locked_now = Vec::new();
        for t in 1..self.traces.len() {
            if self.traces[t].locked || !matches!(self.traces[t].pc, TracePc::Active(_)) {
                continue;
            }
            let mut steps = 0;
            loop {
                if steps >= opts.seek_budget {
                    break;
                }
                let TracePc::Active(pc) = self.traces[t].pc else { break };
                let own = self.traces[t].iters.get(&loop_id).copied().unwrap_or(0);
                if pc == prim_pc && own == target {
                    if self.corresponds(t, &relevant) {
                        self.traces[t].locked = true;
                        if let Some(c) = self.traces[t].cand {
                            locked_now.push(c);
                        }
                        dlog!("seek: trace {t} locked at pc {pc} lap {own}");
                    } else {
                        dlog!("seek: trace {t} aligned at pc {pc} lap {own} but does not correspond");
                    }
                    break;
                }
                if own > target {
                    dlog!("seek: trace {t} past lap target {target} (own {own}), waiting");
                    break;
                }
                match ir.instrs[pc as usize].clone() {
                    Instr::Branch { op, a, b, then_t, else_t } => {
                        let BranchFacts { then_facts, else_facts } =
                            self.branch_outcomes(ir, geo, t, op, &a, &b);
                        let taken = if then_facts.contains(&FALSE_FACT) {
                            Some(else_t)
                        } else if else_facts.contains(&FALSE_FACT) {
                            Some(then_t)
                        } else if self.all_entailed(&then_facts) {
                            Some(then_t)
                        } else if self.all_entailed(&else_facts) {
                            Some(else_t)
                        } else {
                            None
                        };
                        match taken {
                            Some(tgt) => self.traces[t].pc = TracePc::Active(tgt),
                            None => break, // blocked: retry next trigger
                        }
                    }
                    Instr::Check { kind } => {
                        let plan = self.check_plan(geo, t, &kind, opts, pc);
                        if !plan.pass.contains(&FALSE_FACT) && self.all_entailed(&plan.pass) {
                            self.traces[t].pc = TracePc::Active(pc + 1);
                        } else if plan.pass.contains(&FALSE_FACT)
                            || plan
                                .fails
                                .iter()
                                .any(|vf| !vf.is_empty() && !vf.contains(&FALSE_FACT) && self.all_entailed(vf))
                        {
                            self.traces[t].pc = TracePc::Failed(pc);
                            break;
                        } else {
                            break; // blocked
                        }
                    }
                    _ => {
                        self.exec_det(ir, geo, opts, t, false);
                        if !matches!(self.traces[t].pc, TracePc::Active(_)) {
                            break;
                        }
                    }
                }
                steps += 1;
            }
        }
        locked_now
    }

    /// A shrunk trace corresponds when every loop-assigned local is within
    /// one step of the primary's (pointers compare their offset terms).
    fn corresponds(&mut self, t: usize, relevant: &[LocalId]) -> bool {
        for &l in relevant {
            let (a, b) = {
                let g = &self.traces[t].locals[l as usize];
                let p = &self.traces[0].locals[l as usize];
                match (g, p) {
                    (None, None) => continue,
                    (Some(a), Some(b)) => (a.clone(), b.clone()),
                    _ => return false,
                }
            };
            let (x, y) = match (&a, &b) {
                (AVal::Int(x), AVal::Int(y)) => (*x, *y),
                (AVal::Ptr { major: m1, off: x }, AVal::Ptr { major: m2, off: y }) => {
                    if m1 != m2 {
                        return false;
                    }
                    (*x, *y)
                }
                _ => return false,
            };
            let fwd = self.solver().tightest(x, y);
            let bwd = self.solver().tightest(y, x);
            if !(fwd.is_some_and(|c| c <= 1) && bwd.is_some_and(|c| c <= 1)) {
                return false;
            }
        }
        true
    }

    /// A shrunk trace still hunting for a correspondence.
    pub fn has_blocked_shrunk(&self) -> bool {
        self.traces.iter().skip(1).any(|t| !t.locked && matches!(t.pc, TracePc::Active(_)))
    }

    // ---- blame ----

    /// When the primary can fail, find a shrunk trace failing at the same
    /// instruction with a strictly smaller input. Returns the rule and
    /// whether an independent re-check of strictness agreed.
    pub fn blame(&mut self, opts: &DomainOpts) -> Option<(CandKind, bool)> {
        let TracePc::Failed(id) = self.traces[0].pc else { return None };
        let prim_size = self.traces[0].size;
        for t in 1..self.traces.len() {
            if self.traces[t].pc != TracePc::Failed(id) {
                dlog!("blame: trace {t} not failed at pc {id} (pc {:?}, locked {})", self.traces[t].pc, self.traces[t].locked);
                continue;
            }
            let gsize = self.traces[t].size;
            let gap = self.solver().tightest(gsize, prim_size);
            if gap.is_some_and(|c| c <= -opts.size_bound) {
                // Independent strictness audit: assuming the gap away must
                // contradict the store.
                let mut probe = self.solver().clone();
                probe.assert_fact(&Fact::diff(prim_size, gsize, opts.size_bound - 1));
                let strict_ok = !probe.consistent();
                return Some((self.traces[t].cand.expect("shrunk trace has a rule"), strict_ok));
            }
        }
        None
    }

    // ---- widening ----

    pub fn should_widen(&self, opts: &DomainOpts, loop_id: LoopId) -> bool {
        self.widened_loops.contains(&loop_id)
            || self.unroll.get(&loop_id).copied().unwrap_or(0) >= opts.unroll
    }

    /// Truncate the path to the loop entry and mark it widened; returns
    /// the canonical path so the driver can collect same-path neighbors.
    pub fn truncate_path(&mut self, ir: &ProgramIR, loop_id: LoopId) -> Vec<PathSym> {
        let enter = ir.loops.iter().find(|l| l.id == loop_id).map(|l| l.enter).unwrap_or(0);
        if let Some(pos) = self.path.iter().rposition(|s| *s == PathSym::Pc(enter)) {
            self.path.truncate(pos + 1);
        }
        if self.path.last() != Some(&PathSym::Star) {
            self.path.push(PathSym::Star);
        }
        self.widened_loops.insert(loop_id);
        self.path.clone()
    }

    /// Rename bindings onto the finite per-path vocabulary, keep only
    /// facts expressible there, and weaken against same-path neighbors so
    /// repeated widenings on one path converge.
    pub fn widen(&mut self, geo: &Geometry, neighbors: &[&Herd]) {
        let map = self.widen_map(geo);
        let kept: Vec<(Term, Term)> = map.iter().map(|(o, n)| (*o, *n)).collect();

        // Scalar terms participating in pairwise difference capture.
        let mut scalars: Vec<(Term, Term)> = Vec::new(); // (old, new)
        let mut objects: Vec<(u8, MajorId, u16, Term, Term)> = Vec::new();
        for (t, tr) in self.traces.iter().enumerate() {
            for (l, v) in tr.locals.iter().enumerate() {
                if let Some(v) = v {
                    let old = v.term();
                    let new = map[&old];
                    let _ = l;
                    scalars.push((old, new));
                }
            }
            for (&(m, f), &o) in &tr.objs {
                objects.push((t as u8, m, f, o, map[&o]));
            }
            scalars.push((tr.size, map[&tr.size]));
        }
        for (_, ext) in self.array_ext.iter() {
            scalars.push((ext.1, ext.1)); // region lengths are anchors
        }
        scalars.sort();
        scalars.dedup();
        objects.sort();
        objects.dedup();

        let grid: Vec<(Term, Term)> = {
            let mut g = vec![(Term::Zero, Term::Zero)];
            for c in -1..=geo.prefix {
                g.push((Term::Cst(c), Term::Cst(c)));
            }
            g.extend(scalars.iter().copied());
            g.sort();
            g.dedup();
            g
        };

        let mut out: Vec<Fact> = Vec::new();

        // (a) pairwise tightest differences, including cross-trace pairs
        // (these carry the lag and size-gap relations through).
        for i in 0..grid.len() {
            for j in 0..grid.len() {
                if i == j {
                    continue;
                }
                let (ox, nx) = grid[i];
                let (oy, ny) = grid[j];
                if let Some(c) = self.solver().tightest(ox, oy) {
                    out.push(Fact::diff(nx, ny, c));
                }
            }
        }
        // (b) object relations: equality, else agreement windows over a
        // small candidate grid (arrays only).
        for i in 0..objects.len() {
            for j in 0..objects.len() {
                if j <= i {
                    continue;
                }
                let (_, m1, f1, o1, n1) = objects[i];
                let (_, m2, f2, o2, n2) = objects[j];
                if (m1, f1) != (m2, f2) {
                    continue;
                }
                if o1 == o2 || self.entailed(&Fact::Eq(o1, o2)) {
                    out.push(Fact::Eq(n1, n2));
                    continue;
                }
                if geo.array_by_major(m1).is_some() {
                    out.extend(self.agree_windows(geo, o1, o2, n1, n2, &scalars));
                }
            }
            // Self-agreement windows seed the store-pairing rules for the
            // next round of mirrored stores.
            let (_, m1, _, o1, n1) = objects[i];
            if geo.array_by_major(m1).is_some() {
                out.extend(self.agree_windows(geo, o1, o1, n1, n1, &scalars));
            }
        }

        // (c) constant-index probes keep exactly-known leading cells.
        for &(t, m, f, o, n) in &objects {
            if geo.array_by_major(m).is_none() {
                continue;
            }
            let obj_slot = geo.obj_slots[&(m, f)];
            for c in 0..geo.prefix {
                let probe_var = Term::Var { t: 250, l: (obj_slot * 64) + c as u32 };
                let mut probe = self.solver().clone();
                probe.assert_fact(&Fact::Select { z: probe_var, obj: o, idx: Term::Cst(c) });
                if let Some(v) = probe.const_of(probe_var) {
                    let pslot = geo.probe_slot(obj_slot, c);
                    let pname = Term::Widened { t, slot: pslot };
                    out.push(Fact::Select { z: pname, obj: n, idx: Term::Cst(c) });
                    out.push(Fact::diff(pname, Term::Zero, v));
                    out.push(Fact::diff(Term::Zero, pname, -v));
                }
            }
        }

        out.sort();
        out.dedup();

        // Neighbor weakening: quantize differences so chains of widenings
        // on one path terminate, and keep only facts every structurally
        // matching neighbor entails.
        let neighbor_list: Vec<&Herd> = neighbors
            .iter()
            .copied()
            .filter(|n| self.same_shape(n))
            .collect();
        if !neighbor_list.is_empty() {
            let mut solvers: Vec<Solver> = neighbor_list
                .iter()
                .map(|n| {
                    let mut s = Solver::new();
                    s.assert_all(&n.facts);
                    s.close();
                    s
                })
                .collect();
            let mut weakened = Vec::new();
            for f in &out {
                match f {
                    Fact::Diff { x, y, c } => {
                        let mut vals = vec![Some(*c)];
                        for s in solvers.iter_mut() {
                            vals.push(s.tightest(*x, *y));
                        }
                        let all = |p: &dyn Fn(i64) -> bool| vals.iter().all(|v| v.is_some_and(|v| p(v)));
                        if all(&|v| v == *c) {
                            weakened.push(*f);
                        } else if all(&|v| v <= -1) {
                            weakened.push(Fact::diff(*x, *y, -1));
                        } else if all(&|v| v <= 0) {
                            weakened.push(Fact::diff(*x, *y, 0));
                        }
                    }
                    other => {
                        if solvers.iter_mut().all(|s| s.entails(other).is_yes()) {
                            weakened.push(*other);
                        }
                    }
                }
            }
            out = weakened;
        }

        // (d) distinctness among bound ids survives when entailed. Like the
        // structural facts below, these are idempotent and bounded by the
        // binding sites, so they bypass neighbor weakening: a neighbor
        // recorded before a disequality became derivable must not erase it.
        for i in 0..scalars.len() {
            for j in (i + 1)..scalars.len() {
                let (ox, nx) = scalars[i];
                let (oy, ny) = scalars[j];
                if ox != oy && self.entailed(&Fact::Ne(ox, oy)) {
                    out.push(Fact::Ne(nx, ny));
                }
            }
        }

        // Structural facts survive whenever every term keeps a name:
        // spine definitions and depth-one store chains re-anchor loads
        // after the rename. Deeper chain links bind no site, so they drop
        // out on their own and the survivors stay bounded.
        let rename = |x: &Term| -> Option<Term> {
            if let Some(n) = map.get(x) {
                return Some(*n);
            }
            match x {
                Term::Zero | Term::Cst(_) | Term::Init { .. } | Term::RegionLen { .. } => Some(*x),
                _ => None,
            }
        };
        for f in &self.facts {
            match f {
                Fact::Select { z, obj, idx } => {
                    if let (Some(z), Some(obj), Some(idx)) = (rename(z), rename(obj), rename(idx)) {
                        out.push(Fact::Select { z, obj, idx });
                    }
                }
                Fact::Store { z, obj, idx, val } => {
                    if let (Some(z), Some(obj), Some(idx), Some(val)) =
                        (rename(z), rename(obj), rename(idx), rename(val))
                    {
                        out.push(Fact::Store { z, obj, idx, val });
                    }
                }
                _ => {}
            }
        }
        out.sort();
        out.dedup();

        if log_on() {
            let tail: Vec<String> = self
                .path
                .iter()
                .rev()
                .take(8)
                .map(|s| match s {
                    PathSym::Pc(p) => p.to_string(),
                    PathSym::Star => "*".into(),
                })
                .collect();
            dlog!("widen: path len {} tail {:?} neighbors {}", self.path.len(), tail, neighbor_list.len());
            for f in &out {
                if matches!(f, Fact::Select { .. } | Fact::Store { .. } | Fact::Ne(..)) {
                    dlog!("widen-kept: {f:?}");
                }
            }
            for t in 1..self.traces.len() {
                for l in 0..self.traces[t].locals.len() {
                    let (Some(g), Some(p)) = (&self.traces[t].locals[l], &self.traces[0].locals[l]) else {
                        continue;
                    };
                    let (go, po) = (g.term(), p.term());
                    let fwd = self.solver().tightest(go, po);
                    let bwd = self.solver().tightest(po, go);
                    let (gn, pn) = (map[&go], map[&po]);
                    let kf = out.iter().find_map(|f| match f {
                        Fact::Diff { x, y, c } if *x == gn && *y == pn => Some(*c),
                        _ => None,
                    });
                    let kb = out.iter().find_map(|f| match f {
                        Fact::Diff { x, y, c } if *x == pn && *y == gn => Some(*c),
                        _ => None,
                    });
                    dlog!("widen: local {l} t{t} pre ({fwd:?},{bwd:?}) kept ({kf:?},{kb:?}) {gn:?} vs {pn:?}");
                }
            }
        }

        // Rebind every site onto its new name and reset the store.
        for (t, tr) in self.traces.iter_mut().enumerate() {
            let _ = t;
            for v in tr.locals.iter_mut().flatten() {
                match v {
                    AVal::Int(x) => *x = map[x],
                    AVal::Ptr { off, .. } => *off = map[off],
                }
            }
            for (_, o) in tr.objs.iter_mut() {
                *o = map[o];
            }
            tr.size = map[&tr.size];
            tr.occ.clear();
        }
        self.distinct_ids = {
            let mut d = BTreeMap::new();
            for (m, ids) in &self.distinct_ids {
                let kept_ids: Vec<Term> = ids.iter().filter_map(|i| map.get(i).copied()).collect();
                if !kept_ids.is_empty() {
                    d.insert(*m, kept_ids);
                }
            }
            d
        };
        self.init_selects = self
            .init_selects
            .iter()
            .filter_map(|(i, m)| map.get(i).map(|n| (*n, *m)))
            .collect();
        self.allocs = {
            let mut a = BTreeMap::new();
            for (m, ids) in &self.allocs {
                let kept_ids: Vec<Term> = ids.iter().filter_map(|i| map.get(i).copied()).collect();
                if !kept_ids.is_empty() {
                    a.insert(*m, kept_ids);
                }
            }
            a
        };
        let _ = kept;
        self.facts = out;
        self.solver = None;
        self.solver();
    }

    /// Old-term to new-name map over every binding site. Anchor terms
    /// (constants, input names, region lengths) keep their names; the
    /// first site to bind a mid-trace term names it.
    fn widen_map(&self, geo: &Geometry) -> BTreeMap<Term, Term> {
        let mut map: BTreeMap<Term, Term> = BTreeMap::new();
        let anchor = |t: &Term| {
            matches!(t, Term::Zero | Term::Cst(_) | Term::Init { .. } | Term::RegionLen { .. })
        };
        for (t, tr) in self.traces.iter().enumerate() {
            for (l, v) in tr.locals.iter().enumerate() {
                if let Some(v) = v {
                    let old = v.term();
                    map.entry(old).or_insert(if anchor(&old) {
                        old
                    } else {
                        Term::Widened { t: t as u8, slot: l as u32 }
                    });
                }
            }
            for (&(m, f), &o) in &tr.objs {
                map.entry(o).or_insert(if anchor(&o) {
                    o
                } else {
                    Term::Widened { t: t as u8, slot: geo.obj_slots[&(m, f)] }
                });
            }
            let s = tr.size;
            map.entry(s).or_insert(if anchor(&s) {
                s
            } else {
                Term::Widened { t: t as u8, slot: geo.size_slot }
            });
        }
        map
    }

    fn agree_windows(
        &mut self,
        geo: &Geometry,
        o1: Term,
        o2: Term,
        n1: Term,
        n2: Term,
        scalars: &[(Term, Term)],
    ) -> Vec<Fact> {
        // Bases whose names survive renaming make durable windows; try
        // them before mid-trace bindings that get renamed next round.
        let anchor_rank = |t: &Term| match t {
            Term::RegionLen { .. } | Term::Init { .. } => 0,
            Term::Zero | Term::Cst(_) => 1,
            _ => 2,
        };
        let mut ordered: Vec<(Term, Term)> = scalars.to_vec();
        ordered.sort_by_key(|(o, _)| (anchor_rank(o), *o));
        let mut lows: Vec<(Bound, Bound)> = Vec::new(); // (old, new)
        for c in 0..=geo.prefix {
            lows.push((Bound::konst(c), Bound::konst(c)));
        }
        for &(o, n) in &ordered {
            for add in 0..=1 {
                lows.push((Bound::of(o, add), Bound::of(n, add)));
            }
        }
        // Per upper-bound base, adds are tried widest first so the first
        // entailed window for a base is maximal for that base.
        let mut hi_groups: Vec<Vec<(Bound, Bound)>> = Vec::new();
        for &(o, n) in &ordered {
            let mut group = Vec::new();
            for add in [1, 0, -1] {
                group.push((Bound::of(o, add), Bound::of(n, add)));
            }
            hi_groups.push(group);
        }
        // Syntactic containment of window k in window c on renamed bounds.
        let covers = |k: &Fact, lo_n: Bound, hi_n: Bound| -> bool {
            let Fact::Agree { lo: klo, hi: khi, .. } = k else { return false };
            let lo_ok = klo.base == lo_n.base && klo.add <= lo_n.add;
            let hi_ok = khi.base == hi_n.base && hi_n.add <= khi.add;
            lo_ok && hi_ok
        };
        let mut out: Vec<Fact> = Vec::new();
        'pairs: for &(lo_o, lo_n) in &lows {
            for group in &hi_groups {
                for &(hi_o, hi_n) in group {
                    // A same-base window with hi.add <= lo.add is empty.
                    if hi_o.base == lo_o.base && hi_o.add <= lo_o.add {
                        continue;
                    }
                    let q = Fact::Agree { a: o1, b: o2, lo: lo_o, hi: hi_o };
                    if !self.entailed(&q) {
                        continue;
                    }
                    if !out.iter().any(|k| covers(k, lo_n, hi_n)) {
                        out.push(Fact::Agree { a: n1, b: n2, lo: lo_n, hi: hi_n });
                        if out.len() >= 8 {
                            break 'pairs;
                        }
                    }
                    break; // widest for this base; try remaining bases
                }
            }
        }
        out
    }

    // ---- precision preorder ----

    /// Structural comparability: same control state, same rules, same
    /// binding shape.
    pub fn same_shape(&self, other: &Herd) -> bool {
        if self.path != other.path
            || self.traces.len() != other.traces.len()
            || self.added_cands != other.added_cands
        {
            return false;
        }
        for (a, b) in self.traces.iter().zip(&other.traces) {
            if a.pc != b.pc || a.cand != b.cand || a.locked != b.locked {
                return false;
            }
            if a.locals.len() != b.locals.len() {
                return false;
            }
            for (x, y) in a.locals.iter().zip(&b.locals) {
                match (x, y) {
                    (None, None) => {}
                    (Some(AVal::Int(_)), Some(AVal::Int(_))) => {}
                    (Some(AVal::Ptr { major: m1, .. }), Some(AVal::Ptr { major: m2, .. })) => {
                        if m1 != m2 {
                            return false;
                        }
                    }
                    _ => return false,
                }
            }
        }
        true
    }

    /// True when every behavior of `self` is covered by `other`: shapes
    /// match and `other`'s facts (renamed onto `self`'s terms through the
    /// binding sites) are all entailed here.
    pub fn more_precise(&mut self, other: &Herd) -> bool {
        if !self.same_shape(other) {
            return false;
        }
        let mut map: BTreeMap<Term, Term> = BTreeMap::new();
        let bind = |map: &mut BTreeMap<Term, Term>, from: Term, to: Term| -> bool {
            match map.get(&from) {
                Some(existing) => *existing == to,
                None => {
                    map.insert(from, to);
                    true
                }
            }
        };
        for (a, b) in self.traces.iter().zip(&other.traces) {
            for (x, y) in a.locals.iter().zip(&b.locals) {
                if let (Some(x), Some(y)) = (x, y) {
                    if !bind(&mut map, y.term(), x.term()) {
                        return false;
                    }
                }
            }
            for ((k1, x), (k2, y)) in a.objs.iter().zip(&b.objs) {
                if k1 != k2 {
                    return false;
                }
                if !bind(&mut map, *y, *x) {
                    return false;
                }
            }
            if !bind(&mut map, b.size, a.size) {
                return false;
            }
        }
        let rename = |t: Term| -> Option<Term> {
            if let Some(n) = map.get(&t) {
                return Some(*n);
            }
            match t {
                Term::Zero | Term::Cst(_) | Term::Init { .. } | Term::RegionLen { .. } | Term::Widened { .. } => {
                    Some(t)
                }
                _ => None,
            }
        };
        let rename_bound = |b: Bound| rename(b.base).map(|base| Bound { base, add: b.add });
        // Widened names on the coarse side that bind no site here and that
        // this herd's facts never mention are introduced by the widening
        // itself (constant-index probes). Their select facts are
        // definitions, not claims: assert them before checking, which is
        // existential elimination on the covered side.
        let mentioned: BTreeSet<Term> = self.facts.iter().flat_map(|f| f.terms()).collect();
        let mut defs: Vec<Fact> = Vec::new();
        let mut claims: Vec<Fact> = Vec::new();
        for f in &other.facts {
            let renamed = match *f {
                Fact::Diff { x, y, c } => match (rename(x), rename(y)) {
                    (Some(x), Some(y)) => Fact::Diff { x, y, c },
                    _ => return false,
                },
                Fact::Eq(x, y) => match (rename(x), rename(y)) {
                    (Some(x), Some(y)) => Fact::Eq(x, y),
                    _ => return false,
                },
                Fact::Ne(x, y) => match (rename(x), rename(y)) {
                    (Some(x), Some(y)) => Fact::Ne(x, y),
                    _ => return false,
                },
                Fact::App { z, op, a, b } => match (rename(z), rename(a), rename(b)) {
                    (Some(z), Some(a), Some(b)) => Fact::App { z, op, a, b },
                    _ => return false,
                },
                Fact::Select { z, obj, idx } => match (rename(z), rename(obj), rename(idx)) {
                    (Some(z), Some(obj), Some(idx)) => Fact::Select { z, obj, idx },
                    _ => return false,
                },
                Fact::Store { z, obj, idx, val } => {
                    match (rename(z), rename(obj), rename(idx), rename(val)) {
                        (Some(z), Some(obj), Some(idx), Some(val)) => Fact::Store { z, obj, idx, val },
                        _ => return false,
                    }
                }
                Fact::Agree { a, b, lo, hi } => match (rename(a), rename(b), rename_bound(lo), rename_bound(hi)) {
                    (Some(a), Some(b), Some(lo), Some(hi)) => Fact::Agree { a, b, lo, hi },
                    _ => return false,
                },
            };
            if !self.solver().entails(&renamed).is_yes() {
                return false;
            }
        }
        true
    }
}

fn record_field_ty(ir: &ProgramIR, geo: &Geometry, m: MajorId, f: u16) -> Option<ValTy> {
    for (rid, rec) in ir.records.iter().enumerate() {
        if geo.summary_of.get(&(rid as RecordId)) == Some(&m) {
            return rec.fields.get(f as usize).map(|fd: &FieldDef| fd.ty);
        }
    }
    None
}

fn cmp_facts(op: CmpOp, a: Term, b: Term) -> Vec<Fact> {
    match op {
        CmpOp::Eq => vec![Fact::Eq(a, b)],
        CmpOp::Ne => vec![Fact::Ne(a, b)],
        CmpOp::Lt => vec![Fact::diff(a, b, -1)],
        CmpOp::Le => vec![Fact::diff(a, b, 0)],
        CmpOp::Gt => vec![Fact::diff(b, a, -1)],
        CmpOp::Ge => vec![Fact::diff(b, a, 0)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::front::compile;
    use crate::instrument::instrument_checks;

    fn setup(src: &str) -> (ProgramIR, Geometry, DomainOpts) {
        let ir = compile(src, "t").expect("compiles");
        let ir = instrument_checks(&ir, false);
        let opts = DomainOpts::default();
        let geo = Geometry::new(&ir, opts.prefix);
        (ir, geo, opts)
    }

    const FILL: &str = "void f(int *s, int n) { int i; for (i = 0; i < n; i++) { s[i] = 0; } }";

    #[test]
    fn initial_herd_knows_input_contracts() {
        let (ir, geo, _) = setup(FILL);
        let mut h = Herd::initial(&ir, &geo);
        let n = Term::RegionLen { t: 0, major: 0 };
        assert!(h.entailed(&Fact::ge_const(n, 0)));
        assert!(!h.entailed(&Fact::ge_const(n, 1)));
    }

    #[test]
    fn stepping_through_first_iteration_records_bounds() {
        let (ir, geo, opts) = setup(FILL);
        let mut h = Herd::initial(&ir, &geo);
        // Step to the loop condition branch.
        while !h.needs_split(&ir) {
            match h.step(&ir, &geo, &opts) {
                StepEvent::Terminal => panic!("terminated before any branch"),
                _ => {}
            }
        }
        let kids = h.split(&ir, &geo, &opts);
        assert_eq!(kids.len(), 2, "loop condition splits both ways");
        // The true child (i < n with i = 0) must know n >= 1.
        let n = Term::RegionLen { t: 0, major: 0 };
        let mut saw_true = false;
        for mut k in kids {
            if k.entailed(&Fact::ge_const(n, 1)) {
                saw_true = true;
                // In-bounds store check passes deterministically: only the
                // pass child of the deref check survives.
                loop {
                    if k.needs_split(&ir) {
                        let gk = k.split(&ir, &geo, &opts);
                        assert_eq!(gk.len(), 1, "first store is provably in bounds");
                        break;
                    }
                    if matches!(k.step(&ir, &geo, &opts), StepEvent::Terminal) {
                        panic!("unexpected terminal");
                    }
                }
            }
        }
        assert!(saw_true);
    }

    #[test]
    fn shrunk_trace_added_once_existence_is_entailed() {
        let (ir, geo, opts) = setup(FILL);
        let mut h = Herd::initial(&ir, &geo);
        assert!(h.maybe_add_shrunk(&ir, &geo, &opts).is_empty(), "length could be zero");
        let n = Term::RegionLen { t: 0, major: 0 };
        h.push_fact(Fact::ge_const(n, 1));
        let added = h.maybe_add_shrunk(&ir, &geo, &opts);
        assert!(added.contains(&CandKind::ArrayDropFirst(0)));
        assert!(added.contains(&CandKind::ArrayDropLast(0)));
        assert_eq!(h.traces.len(), 3);
        // Size gap is exact for element drops.
        let s0 = Term::Init { t: 0, slot: geo.size_slot };
        let s1 = Term::Init { t: 1, slot: geo.size_slot };
        assert!(h.entailed(&Fact::diff(s1, s0, -1)));
        assert!(h.entailed(&Fact::diff(s0, s1, 1)));
    }

    #[test]
    fn classic_mode_adds_nothing() {
        let (ir, geo, mut opts) = setup(FILL);
        opts.classic = true;
        let mut h = Herd::initial(&ir, &geo);
        let n = Term::RegionLen { t: 0, major: 0 };
        h.push_fact(Fact::ge_const(n, 1));
        assert!(h.maybe_add_shrunk(&ir, &geo, &opts).is_empty());
    }

    #[test]
    fn widening_is_idempotent_on_shape_and_subsumes() {
        let (ir, geo, opts) = setup(FILL);
        let mut h = Herd::initial(&ir, &geo);
        // Drive manually to the second loop boundary, always taking the
        // loop-continuing child.
        let mut iters = 0;
        'outer: loop {
            if h.needs_split(&ir) {
                let kids = h.split(&ir, &geo, &opts);
                let mut chosen = None;
                for k in kids {
                    if matches!(k.primary_pc(), TracePc::Active(_)) {
                        chosen = Some(k);
                        break;
                    }
                }
                h = chosen.expect("a live child");
                // Prefer staying in the loop: the true child of the
                // condition knows n >= 1 + iters.
                continue;
            }
            match h.step(&ir, &geo, &opts) {
                StepEvent::LoopIterDone(l) => {
                    iters += 1;
                    if iters >= 2 {
                        assert!(h.should_widen(&opts, l));
                        h.truncate_path(&ir, l);
                        let mut w = h.clone();
                        w.widen(&geo, &[]);
                        assert!(w.path.last() == Some(&PathSym::Star));
                        // The widened herd covers the concrete one it came
                        // from after the same renaming; check reflexivity
                        // of the preorder on the widened state.
                        let mut w2 = w.clone();
                        assert!(w2.more_precise(&w));
                        break 'outer;
                    }
                }
                StepEvent::Terminal => panic!("terminated early"),
                _ => {}
            }
        }
    }

    #[test]
    fn more_precise_rejects_different_paths() {
        let (ir, geo, _) = setup(FILL);
        let h1 = Herd::initial(&ir, &geo);
        let mut h2 = Herd::initial(&ir, &geo);
        h2.path.push(PathSym::Star);
        let mut h1m = h1.clone();
        assert!(!h1m.more_precise(&h2));
    }

    #[test]
    fn list_head_drop_builds_spine_select() {
        let (ir, geo, opts) = setup(
            "struct node { int val; struct node *next; };\n\
             void f(struct node *l) { int n; n = 0; while (l != 0) { n = n + 1; l = l->next; } assert(n >= 0); }",
        );
        let mut h = Herd::initial(&ir, &geo);
        let root = Term::Init { t: 0, slot: geo.linked[0].root_local };
        h.push_fact(Fact::ge_const(root, 0));
        let added = h.maybe_add_shrunk(&ir, &geo, &opts);
        assert_eq!(added.len(), 1);
        assert!(matches!(added[0], CandKind::ListDropHead { .. }));
        // One-off size gap, both directions.
        let s0 = Term::Init { t: 0, slot: geo.size_slot };
        let s1 = Term::Init { t: 1, slot: geo.size_slot };
        assert!(h.entailed(&Fact::diff(s1, s0, -1)));
    }

    #[test]
    fn blame_requires_matching_instruction_and_gap() {
        let (ir, geo, opts) = setup(FILL);
        let mut h = Herd::initial(&ir, &geo);
        let n = Term::RegionLen { t: 0, major: 0 };
        h.push_fact(Fact::ge_const(n, 1));
        h.maybe_add_shrunk(&ir, &geo, &opts);
        h.traces[0].pc = TracePc::Failed(7);
        assert!(h.blame(&opts).is_none(), "no shrunk trace failed");
        h.traces[1].pc = TracePc::Failed(8);
        assert!(h.blame(&opts).is_none(), "failure at a different instruction");
        h.traces[1].pc = TracePc::Failed(7);
        let b = h.blame(&opts);
        assert!(b.is_some());
        let (cand, strict) = b.unwrap();
        assert_eq!(cand, CandKind::ArrayDropFirst(0));
        assert!(strict, "strictness audit must agree");
    }
}
