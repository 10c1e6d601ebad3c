//! AST-to-IR lowering: scoped name resolution, short-circuit control
//! flow, loop boundary markers, call inlining (self tail recursion is
//! rewritten to a loop first), and test-parameter shape detection with
//! struct flattening.

use super::ast::*;
use crate::diag::Diagnostic;
use crate::ir::{
    BinOp, CmpOp, FieldDef, Instr, IntTy, LocalDecl, LocalId, LoopMeta, Operand, ParamShape,
    Pointee, ProgramIR, RecordDef, RecordId, UnOp, ValTy,
};
use std::collections::BTreeMap;

struct Fail;
type LResult<T> = Result<T, Fail>;

#[derive(Debug, Clone)]
enum Binding {
    Local(LocalId),
    /// A flattened struct parameter: field name -> local, plus whether
    /// accesses use `->` (pointer parameter) or `.` (by-value parameter).
    Parts(BTreeMap<String, LocalId>, bool),
}

#[derive(Debug, Clone, Copy)]
enum Place {
    Local(LocalId),
    Mem { addr: LocalId, field: Option<u16>, ty: ValTy },
}

struct LoopFrame {
    brk: Vec<usize>,
    cont: Vec<usize>,
}

struct RetCtx {
    result: Option<(LocalId, ValTy)>,
    end_patches: Vec<usize>,
}

/// How a struct may be used, derived from its field list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StructClass {
    /// Linked node: int fields plus pointers to registered structs.
    Linked,
    /// Array carrier: scalar fields plus (`T *f`, `int n_f`) pairs;
    /// flattened when used as a test parameter.
    ArrayCarrier,
    /// Ints only: usable either way (registered as a record).
    Plain,
    Unsupported,
}

pub struct Lower<'a> {
    unit: &'a Unit,
    name: String,
    records: Vec<RecordDef>,
    rec_ids: BTreeMap<String, RecordId>,
    classes: BTreeMap<String, StructClass>,
    struct_defs: BTreeMap<String, &'a StructDef>,
    funcs: BTreeMap<String, &'a FuncDef>,
    consts: BTreeMap<String, i64>,
    locals: Vec<LocalDecl>,
    instrs: Vec<Instr>,
    lines: Vec<u32>,
    cur_line: u32,
    loops: Vec<(u32, u32, u32, u32)>, // id, enter, iter, end
    loop_stack: Vec<LoopFrame>,
    ret_stack: Vec<RetCtx>,
    scopes: Vec<BTreeMap<String, Binding>>,
    diags: Vec<Diagnostic>,
    inline_depth: u32,
    next_loop: u32,
}

const PATCH: u32 = u32::MAX;

impl<'a> Lower<'a> {
    fn err(&mut self, line: u32, msg: impl Into<String>) -> Fail {
        self.diags.push(Diagnostic::new(line, msg));
        Fail
    }

    fn emit(&mut self, i: Instr) -> usize {
        self.instrs.push(i);
        self.lines.push(self.cur_line);
        self.instrs.len() - 1
    }

    fn here(&self) -> u32 {
        self.instrs.len() as u32
    }

    fn tmp(&mut self, ty: ValTy, hint: &str) -> LocalId {
        let id = self.locals.len() as LocalId;
        self.locals.push(LocalDecl { name: format!("%{hint}{id}"), ty });
        id
    }

    fn named_local(&mut self, name: &str, ty: ValTy) -> LocalId {
        let id = self.locals.len() as LocalId;
        self.locals.push(LocalDecl { name: name.to_string(), ty });
        self.scopes.last_mut().unwrap().insert(name.to_string(), Binding::Local(id));
        id
    }

    fn lookup(&self, name: &str) -> Option<Binding> {
        for scope in self.scopes.iter().rev() {
            if let Some(b) = scope.get(name) {
                return Some(b.clone());
            }
        }
        None
    }

    /// Apply a recorded jump/branch patch list to a target.
    fn patch(&mut self, list: &[usize], target: u32) {
        for &ent in list {
            let idx = ent >> 1;
            let side = ent & 1;
            match &mut self.instrs[idx] {
                Instr::Branch { then_t, else_t, .. } => {
                    if side == 0 {
                        *then_t = target;
                    } else {
                        *else_t = target;
                    }
                }
                Instr::Jump { target: t } => *t = target,
                other => panic!("patch target is not a jump: {other:?}"),
            }
        }
    }

    fn valty(&mut self, ty: &Ty, line: u32) -> LResult<ValTy> {
        match ty {
            Ty::Int(t) => Ok(ValTy::Int(*t)),
            Ty::Ptr(inner) => match &**inner {
                Ty::Int(t) => Ok(ValTy::Ptr(Pointee::Elem(*t))),
                Ty::Struct(s) => match self.rec_ids.get(s) {
                    Some(id) => Ok(ValTy::Ptr(Pointee::Record(*id))),
                    None => match self.classes.get(s) {
                        Some(StructClass::ArrayCarrier) => Err(self.err(
                            line,
                            format!("struct {s} carries arrays and may only be used as a flattened test parameter"),
                        )),
                        _ => Err(self.err(line, format!("unknown struct {s}"))),
                    },
                },
                Ty::Void => Err(self.err(line, "void pointers are not supported")),
                _ => Err(self.err(line, "unsupported pointer type")),
            },
            Ty::Struct(s) => Err(self.err(line, format!("struct {s} values may only appear as test parameters"))),
            Ty::Void => Err(self.err(line, "void is not a value type")),
        }
    }

    // ---- expressions ----

    fn int_ty_of(&mut self, v: ValTy, line: u32) -> LResult<IntTy> {
        match v {
            ValTy::Int(t) => Ok(t),
            ValTy::Ptr(_) => Err(self.err(line, "expected an integer operand")),
        }
    }

    /// C integer promotion: anything narrower than int computes as int.
    fn promote(t: IntTy) -> IntTy {
        if t.bits < 32 {
            IntTy::INT
        } else {
            t
        }
    }

    fn usual_arith(a: IntTy, b: IntTy) -> IntTy {
        let (a, b) = (Self::promote(a), Self::promote(b));
        if a == b {
            a
        } else if a.bits != b.bits {
            if a.bits > b.bits {
                a
            } else {
                b
            }
        } else {
            IntTy { bits: a.bits, signed: false }
        }
    }

    fn convert(&mut self, v: Operand, from: ValTy, to: ValTy, line: u32) -> LResult<Operand> {
        match (from, to) {
            (ValTy::Int(f), ValTy::Int(t)) => {
                if f == t {
                    return Ok(v);
                }
                if let Operand::Const(c) = v {
                    return Ok(Operand::Const(t.wrap(c)));
                }
                // Value-preserving widenings don't need a wrap.
                if t.bits > f.bits && (f.signed == t.signed || (!f.signed && t.signed)) {
                    return Ok(v);
                }
                let dst = self.tmp(ValTy::Int(t), "cast");
                self.emit(Instr::Unop { dst, op: UnOp::Cast, src: v, ty: t });
                Ok(Operand::Local(dst))
            }
            (ValTy::Ptr(p), ValTy::Ptr(q)) => {
                if p == q {
                    Ok(v)
                } else {
                    Err(self.err(line, "incompatible pointer conversion"))
                }
            }
            (ValTy::Int(_), ValTy::Ptr(_)) => {
                if v == Operand::Const(0) {
                    Ok(v)
                } else {
                    Err(self.err(line, "integer-to-pointer casts are not supported (only literal 0)"))
                }
            }
            (ValTy::Ptr(_), ValTy::Int(_)) => Err(self.err(line, "pointer-to-integer casts are not supported")),
        }
    }

    fn lower_expr(&mut self, e: &Expr) -> LResult<(Operand, ValTy)> {
        self.cur_line = e.line;
        match &e.kind {
            ExprK::Num(n) => {
                let ty = if IntTy::INT.contains(*n) { IntTy::INT } else { IntTy::LONG };
                Ok((Operand::Const(*n), ValTy::Int(ty)))
            }
            ExprK::Var(name) => match self.lookup(name) {
                Some(Binding::Local(l)) => Ok((Operand::Local(l), self.locals[l as usize].ty)),
                Some(Binding::Parts(..)) => {
                    Err(self.err(e.line, format!("flattened parameter {name} may only be used via field access")))
                }
                None => match self.consts.get(name) {
                    Some(v) => Ok((Operand::Const(*v), ValTy::Int(IntTy::INT))),
                    None => Err(self.err(e.line, format!("unknown identifier {name}"))),
                },
            },
            ExprK::Un(k, x) => {
                let (v, vt) = self.lower_expr(x)?;
                let it = self.int_ty_of(vt, e.line)?;
                let ty = Self::promote(it);
                if let Operand::Const(c) = v {
                    let folded = match k {
                        UnK::Neg => ty.wrap(c.wrapping_neg()),
                        UnK::BitNot => ty.wrap(!c),
                    };
                    return Ok((Operand::Const(folded), ValTy::Int(ty)));
                }
                let op = match k {
                    UnK::Neg => UnOp::Neg,
                    UnK::BitNot => UnOp::BitNot,
                };
                let dst = self.tmp(ValTy::Int(ty), "un");
                self.emit(Instr::Unop { dst, op, src: v, ty });
                Ok((Operand::Local(dst), ValTy::Int(ty)))
            }
            ExprK::Bin(k, l, r) => self.lower_bin(*k, l, r, e.line),
            ExprK::Cmp(..) | ExprK::LAnd(..) | ExprK::LOr(..) | ExprK::LNot(..) => {
                self.materialize_cond(e)
            }
            ExprK::Tern(c, t, f) => {
                let mut tl = Vec::new();
                let mut fl = Vec::new();
                self.lower_cond(c, &mut tl, &mut fl)?;
                let t_start = self.here();
                self.patch(&tl, t_start);
                let (tv, tt) = self.lower_expr(t)?;
                // Pick the result slot type from the first arm.
                let dst = self.tmp(tt, "sel");
                self.emit(Instr::Assign { dst, src: tv });
                let skip = self.emit(Instr::Jump { target: PATCH });
                let f_start = self.here();
                self.patch(&fl, f_start);
                let (fv, ft) = self.lower_expr(f)?;
                let fv = self.convert(fv, ft, tt, e.line)?;
                self.emit(Instr::Assign { dst, src: fv });
                let end = self.here();
                self.patch(&[skip << 1], end);
                Ok((Operand::Local(dst), tt))
            }
            ExprK::Call(name, args) => self.lower_call(name, args, e.line),
            ExprK::Index(..) | ExprK::Deref(..) | ExprK::Field(..) => {
                let p = self.lower_place(e)?;
                self.load_place(p)
            }
            ExprK::Cast(ty, inner) => {
                // malloc must be typed by the cast, so handle it first.
                if let ExprK::Call(fname, args) = &inner.kind {
                    if fname == "malloc" {
                        let tv = self.valty(ty, e.line)?;
                        let got = self.lower_malloc(args, e.line)?;
                        let ValTy::Ptr(Pointee::Record(rid)) = self.locals[got as usize].ty else {
                            return Err(self.err(e.line, "malloc lowering produced a non-record pointer"));
                        };
                        if tv != ValTy::Ptr(Pointee::Record(rid)) {
                            return Err(self.err(e.line, "cast type does not match malloc(sizeof ...) argument"));
                        }
                        return Ok((Operand::Local(got), tv));
                    }
                }
                let (v, vt) = self.lower_expr(inner)?;
                let tv = self.valty(ty, e.line)?;
                let out = self.convert(v, vt, tv, e.line)?;
                Ok((out, tv))
            }
            ExprK::SizeofStruct(_) => Err(self.err(e.line, "sizeof is only supported inside malloc")),
        }
    }

    fn lower_bin(&mut self, k: BinK, l: &Expr, r: &Expr, line: u32) -> LResult<(Operand, ValTy)> {
        let (lv, lt) = self.lower_expr(l)?;
        let (rv, rt) = self.lower_expr(r)?;
        // Pointer arithmetic.
        if let ValTy::Ptr(p) = lt {
            if !matches!(p, Pointee::Elem(_)) {
                return Err(self.err(line, "pointer arithmetic is only supported on element pointers"));
            }
            let _ = self.int_ty_of(rt, line)?;
            let off = match k {
                BinK::Add => rv,
                BinK::Sub => match rv {
                    Operand::Const(c) => Operand::Const(-c),
                    Operand::Local(_) => {
                        let neg = self.tmp(ValTy::Int(IntTy::LONG), "neg");
                        self.emit(Instr::Unop { dst: neg, op: UnOp::Neg, src: rv, ty: IntTy::LONG });
                        Operand::Local(neg)
                    }
                },
                _ => return Err(self.err(line, "unsupported operation on pointers")),
            };
            let dst = self.tmp(lt, "ptr");
            self.emit(Instr::Binop { dst, op: BinOp::PtrAdd, a: lv, b: off, ty: IntTy::LONG });
            return Ok((Operand::Local(dst), lt));
        }
        if matches!(rt, ValTy::Ptr(_)) {
            return Err(self.err(line, "pointers may only appear on the left of pointer arithmetic"));
        }
        let lit = self.int_ty_of(lt, line)?;
        let rit = self.int_ty_of(rt, line)?;
        let ty = Self::usual_arith(lit, rit);
        // Constant fold.
        if let (Operand::Const(a), Operand::Const(b)) = (lv, rv) {
            if let Some(v) = const_binop(k, a, b, ty) {
                return Ok((Operand::Const(v), ValTy::Int(ty)));
            }
        }
        // Division-like ops need true common-type operand values.
        let (lv, rv) = if matches!(k, BinK::Div | BinK::Rem | BinK::Shr) {
            let lv = self.convert(lv, ValTy::Int(lit), ValTy::Int(ty), line)?;
            let rv = self.convert(rv, ValTy::Int(rit), ValTy::Int(ty), line)?;
            (lv, rv)
        } else {
            (lv, rv)
        };
        let op = match k {
            BinK::Add => BinOp::Add,
            BinK::Sub => BinOp::Sub,
            BinK::Mul => BinOp::Mul,
            BinK::Div => BinOp::Div,
            BinK::Rem => BinOp::Rem,
            BinK::BitAnd => BinOp::BitAnd,
            BinK::BitOr => BinOp::BitOr,
            BinK::BitXor => BinOp::BitXor,
            BinK::Shl => BinOp::Shl,
            BinK::Shr => BinOp::Shr,
        };
        let dst = self.tmp(ValTy::Int(ty), "bin");
        self.emit(Instr::Binop { dst, op, a: lv, b: rv, ty });
        Ok((Operand::Local(dst), ValTy::Int(ty)))
    }

    /// Evaluate a boolean expression to 0/1 by branching.
    fn materialize_cond(&mut self, e: &Expr) -> LResult<(Operand, ValTy)> {
        if let ExprK::LNot(x) = &e.kind {
            // Single-instruction form when the operand is a plain integer.
            if !matches!(
                x.kind,
                ExprK::Cmp(..) | ExprK::LAnd(..) | ExprK::LOr(..) | ExprK::LNot(..) | ExprK::Tern(..)
            ) {
                let (v, vt) = self.lower_expr(x)?;
                if matches!(vt, ValTy::Int(_)) {
                    let dst = self.tmp(ValTy::Int(IntTy::INT), "not");
                    self.emit(Instr::Unop { dst, op: UnOp::Not, src: v, ty: IntTy::INT });
                    return Ok((Operand::Local(dst), ValTy::Int(IntTy::INT)));
                }
                // Pointer: !p means p == 0; branch on the lowered value.
                let idx = self.emit(Instr::Branch {
                    op: CmpOp::Eq,
                    a: v,
                    b: Operand::Const(0),
                    then_t: PATCH,
                    else_t: PATCH,
                });
                let dst = self.tmp(ValTy::Int(IntTy::INT), "flag");
                let t_start = self.here();
                self.patch(&[idx << 1], t_start);
                self.emit(Instr::Assign { dst, src: Operand::Const(1) });
                let skip = self.emit(Instr::Jump { target: PATCH });
                let f_start = self.here();
                self.patch(&[(idx << 1) | 1], f_start);
                self.emit(Instr::Assign { dst, src: Operand::Const(0) });
                let end = self.here();
                self.patch(&[skip << 1], end);
                return Ok((Operand::Local(dst), ValTy::Int(IntTy::INT)));
            }
        }
        let mut tl = Vec::new();
        let mut fl = Vec::new();
        self.lower_cond(e, &mut tl, &mut fl)?;
        let dst = self.tmp(ValTy::Int(IntTy::INT), "flag");
        let t_start = self.here();
        self.patch(&tl, t_start);
        self.emit(Instr::Assign { dst, src: Operand::Const(1) });
        let skip = self.emit(Instr::Jump { target: PATCH });
        let f_start = self.here();
        self.patch(&fl, f_start);
        self.emit(Instr::Assign { dst, src: Operand::Const(0) });
        let end = self.here();
        self.patch(&[skip << 1], end);
        Ok((Operand::Local(dst), ValTy::Int(IntTy::INT)))
    }

    /// Lower `e` as a branch condition. Emits branches whose true/false
    /// exits are appended to `tl`/`fl`; falling through means true when
    /// `tl` stays untouched by the caller's next patch.
    fn lower_cond(&mut self, e: &Expr, tl: &mut Vec<usize>, fl: &mut Vec<usize>) -> LResult<()> {
        self.cur_line = e.line;
        match &e.kind {
            ExprK::Num(n) => {
                if *n == 0 {
                    let j = self.emit(Instr::Jump { target: PATCH });
                    fl.push(j << 1);
                }
                Ok(())
            }
            ExprK::LNot(x) => self.lower_cond(x, fl, tl),
            ExprK::LAnd(l, r) => {
                let mut ltl = Vec::new();
                self.lower_cond(l, &mut ltl, fl)?;
                let here = self.here();
                self.patch(&ltl, here);
                self.lower_cond(r, tl, fl)
            }
            ExprK::LOr(l, r) => {
                let mut lfl = Vec::new();
                self.lower_cond(l, tl, &mut lfl)?;
                let here = self.here();
                self.patch(&lfl, here);
                self.lower_cond(r, tl, fl)
            }
            ExprK::Cmp(op, l, r) => {
                let (lv, lt) = self.lower_expr(l)?;
                let (rv, rt) = self.lower_expr(r)?;
                match (lt, rt) {
                    (ValTy::Ptr(_), _) | (_, ValTy::Ptr(_)) => {
                        if !matches!(op, CmpOp::Eq | CmpOp::Ne) {
                            return Err(self.err(e.line, "ordered pointer comparisons are not supported"));
                        }
                        let null_ok = |v: Operand, t: ValTy| matches!(t, ValTy::Ptr(_)) || v == Operand::Const(0);
                        if !(null_ok(lv, lt) && null_ok(rv, rt)) {
                            return Err(self.err(e.line, "pointers may only be compared with pointers or 0"));
                        }
                    }
                    (ValTy::Int(a), ValTy::Int(b)) => {
                        let (pa, pb) = (Self::promote(a), Self::promote(b));
                        if pa.signed != pb.signed && !matches!((lv, rv), (Operand::Const(_), _) | (_, Operand::Const(_))) {
                            return Err(self.err(e.line, "mixed signed/unsigned comparisons are not supported"));
                        }
                    }
                }
                let idx = self.emit(Instr::Branch { op: *op, a: lv, b: rv, then_t: PATCH, else_t: PATCH });
                tl.push(idx << 1);
                fl.push((idx << 1) | 1);
                Ok(())
            }
            _ => {
                let (v, _) = self.lower_expr(e)?;
                let idx = self.emit(Instr::Branch {
                    op: CmpOp::Ne,
                    a: v,
                    b: Operand::Const(0),
                    then_t: PATCH,
                    else_t: PATCH,
                });
                tl.push(idx << 1);
                fl.push((idx << 1) | 1);
                Ok(())
            }
        }
    }

    // ---- places ----

    fn lower_place(&mut self, e: &Expr) -> LResult<Place> {
        self.cur_line = e.line;
        match &e.kind {
            ExprK::Var(name) => match self.lookup(name) {
                Some(Binding::Local(l)) => Ok(Place::Local(l)),
                Some(Binding::Parts(..)) => {
                    Err(self.err(e.line, format!("flattened parameter {name} may only be used via field access")))
                }
                None => Err(self.err(e.line, format!("unknown identifier {name}"))),
            },
            ExprK::Field(base, fname, arrow) => {
                if let ExprK::Var(vn) = &base.kind {
                    if let Some(Binding::Parts(parts, part_arrow)) = self.lookup(vn) {
                        if *arrow != part_arrow {
                            let want = if part_arrow { "->" } else { "." };
                            return Err(self.err(e.line, format!("parameter {vn} fields are accessed with {want}")));
                        }
                        return match parts.get(fname) {
                            Some(l) => Ok(Place::Local(*l)),
                            None => Err(self.err(e.line, format!("struct has no field {fname}"))),
                        };
                    }
                }
                if !arrow {
                    return Err(self.err(e.line, "`.` access is only supported on flattened parameters"));
                }
                let (bv, bt) = self.lower_expr(base)?;
                let ValTy::Ptr(Pointee::Record(rid)) = bt else {
                    return Err(self.err(e.line, "`->` requires a struct pointer"));
                };
                let rec = &self.records[rid as usize];
                let Some(fidx) = rec.fields.iter().position(|f| f.name == *fname) else {
                    return Err(self.err(e.line, format!("struct {} has no field {fname}", rec.name)));
                };
                let fty = rec.fields[fidx].ty;
                let Operand::Local(addr) = bv else {
                    return Err(self.err(e.line, "cannot dereference a null constant"));
                };
                Ok(Place::Mem { addr, field: Some(fidx as u16), ty: fty })
            }
            ExprK::Index(base, idx) => {
                let (bv, bt) = self.lower_expr(base)?;
                let ValTy::Ptr(Pointee::Elem(elem)) = bt else {
                    return Err(self.err(e.line, "indexing requires an element pointer"));
                };
                let (iv, it) = self.lower_expr(idx)?;
                self.int_ty_of(it, e.line)?;
                let Operand::Local(base_l) = bv else {
                    return Err(self.err(e.line, "cannot index a null constant"));
                };
                if iv == Operand::Const(0) {
                    return Ok(Place::Mem { addr: base_l, field: None, ty: ValTy::Int(elem) });
                }
                let addr = self.tmp(bt, "elem");
                self.emit(Instr::Binop { dst: addr, op: BinOp::PtrAdd, a: bv, b: iv, ty: IntTy::LONG });
                Ok(Place::Mem { addr, field: None, ty: ValTy::Int(elem) })
            }
            ExprK::Deref(inner) => {
                let (v, t) = self.lower_expr(inner)?;
                match t {
                    ValTy::Ptr(Pointee::Elem(elem)) => {
                        let Operand::Local(addr) = v else {
                            return Err(self.err(e.line, "cannot dereference a null constant"));
                        };
                        Ok(Place::Mem { addr, field: None, ty: ValTy::Int(elem) })
                    }
                    ValTy::Ptr(Pointee::Record(_)) => {
                        Err(self.err(e.line, "dereferencing a struct pointer requires ->field"))
                    }
                    ValTy::Int(_) => Err(self.err(e.line, "cannot dereference an integer")),
                }
            }
            _ => Err(self.err(e.line, "expression is not assignable")),
        }
    }

    fn load_place(&mut self, p: Place) -> LResult<(Operand, ValTy)> {
        match p {
            Place::Local(l) => Ok((Operand::Local(l), self.locals[l as usize].ty)),
            Place::Mem { addr, field, ty } => {
                let dst = self.tmp(ty, "load");
                self.emit(Instr::Load { dst, addr, field });
                Ok((Operand::Local(dst), ty))
            }
        }
    }

    fn store_place(&mut self, p: Place, v: Operand, vt: ValTy, line: u32) -> LResult<()> {
        match p {
            Place::Local(l) => {
                let ty = self.locals[l as usize].ty;
                let v = self.convert(v, vt, ty, line)?;
                self.emit(Instr::Assign { dst: l, src: v });
                Ok(())
            }
            Place::Mem { addr, field, ty } => {
                let v = self.convert(v, vt, ty, line)?;
                self.emit(Instr::Store { addr, field, val: v });
                Ok(())
            }
        }
    }

    // ---- calls ----

    fn lower_malloc(&mut self, args: &[Expr], line: u32) -> LResult<LocalId> {
        if args.len() != 1 {
            return Err(self.err(line, "malloc takes exactly one argument"));
        }
        let ExprK::SizeofStruct(sname) = &args[0].kind else {
            return Err(self.err(line, "malloc argument must be sizeof(struct ...)"));
        };
        let Some(rid) = self.rec_ids.get(sname).copied() else {
            return Err(self.err(line, format!("cannot allocate struct {sname}: not a linked node type")));
        };
        let dst = self.tmp(ValTy::Ptr(Pointee::Record(rid)), "new");
        self.emit(Instr::Alloc { dst, rec: rid });
        Ok(dst)
    }

    fn nondet_ty(name: &str) -> Option<IntTy> {
        let stripped = name.strip_prefix("__VERIFIER_nondet_").or_else(|| name.strip_prefix("nondet_"))?;
        match stripped {
            "int" => Some(IntTy::INT),
            "uint" | "unsigned" => Some(IntTy::UINT),
            "char" => Some(IntTy::CHAR),
            "uchar" => Some(IntTy::UCHAR),
            "long" => Some(IntTy::LONG),
            _ => None,
        }
    }

    fn lower_call(&mut self, name: &str, args: &[Expr], line: u32) -> LResult<(Operand, ValTy)> {
        if let Some(ty) = Self::nondet_ty(name) {
            if !args.is_empty() {
                return Err(self.err(line, "nondet functions take no arguments"));
            }
            let dst = self.tmp(ValTy::Int(ty), "nd");
            self.emit(Instr::Nondet { dst, ty });
            return Ok((Operand::Local(dst), ValTy::Int(ty)));
        }
        if name == "malloc" {
            let dst = self.lower_malloc(args, line)?;
            let ty = self.locals[dst as usize].ty;
            return Ok((Operand::Local(dst), ty));
        }
        if matches!(name, "free") {
            return Err(self.err(line, "free is not supported; traces run to completion without reclamation"));
        }
        if let Some(f) = self.funcs.get(name).copied() {
            return self.inline_call(f, args, line);
        }
        Err(self.err(line, format!("unknown function {name}")))
    }

    fn inline_call(&mut self, f: &'a FuncDef, args: &[Expr], line: u32) -> LResult<(Operand, ValTy)> {
        if self.inline_depth >= 32 {
            return Err(self.err(line, "call nesting too deep to inline"));
        }
        if args.len() != f.params.len() {
            return Err(self.err(line, format!("{} expects {} arguments", f.name, f.params.len())));
        }
        let mut param_map = BTreeMap::new();
        for (p, a) in f.params.iter().zip(args) {
            let pt = self.valty(&p.ty, line)?;
            let (av, at) = self.lower_expr(a)?;
            let av = self.convert(av, at, pt, line)?;
            let pl = self.tmp(pt, &format!("{}.{}", f.name, p.name));
            self.locals[pl as usize].name = format!("{}.{}", f.name, p.name);
            self.emit(Instr::Assign { dst: pl, src: av });
            param_map.insert(p.name.clone(), Binding::Local(pl));
        }
        let result = match &f.ret {
            Ty::Void => None,
            t => {
                let rt = self.valty(t, line)?;
                Some((self.tmp(rt, &format!("{}.ret", f.name)), rt))
            }
        };
        let saved_scopes = std::mem::replace(&mut self.scopes, vec![param_map]);
        let saved_loops = std::mem::take(&mut self.loop_stack);
        self.ret_stack.push(RetCtx { result, end_patches: Vec::new() });
        self.inline_depth += 1;
        let body_ok = self.lower_block(&f.body);
        self.inline_depth -= 1;
        let ctx = self.ret_stack.pop().unwrap();
        self.scopes = saved_scopes;
        self.loop_stack = saved_loops;
        body_ok?;
        let end = self.here();
        self.patch(&ctx.end_patches, end);
        match ctx.result {
            Some((l, t)) => Ok((Operand::Local(l), t)),
            None => Ok((Operand::Const(0), ValTy::Int(IntTy::INT))),
        }
    }

    // ---- statements ----

    fn lower_block(&mut self, stmts: &[Stmt]) -> LResult<()> {
        self.scopes.push(BTreeMap::new());
        let mut result = Ok(());
        for s in stmts {
            result = self.lower_stmt(s);
            if result.is_err() {
                break;
            }
        }
        self.scopes.pop();
        result
    }

    fn lower_stmt(&mut self, s: &Stmt) -> LResult<()> {
        self.cur_line = s.line;
        match &s.kind {
            StmtK::Block(b) => self.lower_block(b),
            StmtK::Decl(ty, name, init) => {
                if let Ty::Struct(_) = ty {
                    return Err(self.err(s.line, "struct locals are not supported; use pointers"));
                }
                let vt = self.valty(ty, s.line)?;
                let l = self.named_local(name, vt);
                if let Some(e) = init {
                    let (v, et) = self.lower_expr(e)?;
                    let v = self.convert(v, et, vt, s.line)?;
                    self.emit(Instr::Assign { dst: l, src: v });
                }
                Ok(())
            }
            StmtK::Assign(lhs, rhs) => {
                let p = self.lower_place(lhs)?;
                let (v, vt) = self.lower_expr(rhs)?;
                self.store_place(p, v, vt, s.line)
            }
            StmtK::OpAssign(k, lhs, rhs) => {
                let p = self.lower_place(lhs)?;
                let (cur, ct) = self.load_place(p)?;
                let (rv, rt) = self.lower_expr(rhs)?;
                let (res, res_t) = self.apply_bin(*k, cur, ct, rv, rt, s.line)?;
                self.store_place(p, res, res_t, s.line)
            }
            StmtK::IncDec(lhs, delta) => {
                let p = self.lower_place(lhs)?;
                let (cur, ct) = self.load_place(p)?;
                let (res, res_t) =
                    self.apply_bin(BinK::Add, cur, ct, Operand::Const(*delta), ValTy::Int(IntTy::INT), s.line)?;
                self.store_place(p, res, res_t, s.line)
            }
            StmtK::If(c, t, e) => {
                let mut tl = Vec::new();
                let mut fl = Vec::new();
                self.lower_cond(c, &mut tl, &mut fl)?;
                let t_start = self.here();
                self.patch(&tl, t_start);
                self.lower_block(t)?;
                if e.is_empty() {
                    let end = self.here();
                    self.patch(&fl, end);
                } else {
                    let skip = self.emit(Instr::Jump { target: PATCH });
                    let f_start = self.here();
                    self.patch(&fl, f_start);
                    self.lower_block(e)?;
                    let end = self.here();
                    self.patch(&[skip << 1], end);
                }
                Ok(())
            }
            StmtK::While(c, body) => self.lower_loop(Some(c), None, body),
            StmtK::For(init, c, upd, body) => {
                self.scopes.push(BTreeMap::new());
                if let Some(i) = init {
                    self.lower_stmt(i)?;
                }
                let r = self.lower_loop(c.as_ref(), upd.as_deref(), body);
                self.scopes.pop();
                r
            }
            StmtK::Return(v) => {
                if let Some(ctx_idx) = self.ret_stack.len().checked_sub(1) {
                    let result = self.ret_stack[ctx_idx].result;
                    match (result, v) {
                        (Some((dst, dt)), Some(e)) => {
                            let (rv, rt) = self.lower_expr(e)?;
                            let rv = self.convert(rv, rt, dt, s.line)?;
                            self.emit(Instr::Assign { dst, src: rv });
                        }
                        (Some(_), None) => {
                            return Err(self.err(s.line, "missing return value"));
                        }
                        (None, Some(_)) | (None, None) => {}
                    }
                    let j = self.emit(Instr::Jump { target: PATCH });
                    self.ret_stack[ctx_idx].end_patches.push(j << 1);
                } else {
                    if let Some(e) = v {
                        let _ = self.lower_expr(e)?;
                    }
                    self.emit(Instr::Halt);
                }
                Ok(())
            }
            StmtK::Break => match self.loop_stack.last_mut() {
                Some(_) => {
                    let j = self.emit(Instr::Jump { target: PATCH });
                    self.loop_stack.last_mut().unwrap().brk.push(j << 1);
                    Ok(())
                }
                None => Err(self.err(s.line, "break outside of a loop")),
            },
            StmtK::Continue => match self.loop_stack.last_mut() {
                Some(_) => {
                    let j = self.emit(Instr::Jump { target: PATCH });
                    self.loop_stack.last_mut().unwrap().cont.push(j << 1);
                    Ok(())
                }
                None => Err(self.err(s.line, "continue outside of a loop")),
            },
            StmtK::Expr(e) => {
                if let ExprK::Call(name, args) = &e.kind {
                    match name.as_str() {
                        "__VERIFIER_fail" | "fail" => {
                            self.emit(Instr::Fail);
                            return Ok(());
                        }
                        "__VERIFIER_ignore" | "ignore" => {
                            self.emit(Instr::Ignore);
                            return Ok(());
                        }
                        "__VERIFIER_assert" | "assert" => {
                            if args.len() != 1 {
                                return Err(self.err(s.line, "assert takes one argument"));
                            }
                            let mut tl = Vec::new();
                            let mut fl = Vec::new();
                            self.lower_cond(&args[0], &mut tl, &mut fl)?;
                            let fail_at = self.here();
                            if !fl.is_empty() {
                                self.emit(Instr::Fail);
                            }
                            self.patch(&fl, fail_at);
                            let cont = self.here();
                            self.patch(&tl, cont);
                            return Ok(());
                        }
                        "__VERIFIER_assume" | "assume" => {
                            if args.len() != 1 {
                                return Err(self.err(s.line, "assume takes one argument"));
                            }
                            let mut tl = Vec::new();
                            let mut fl = Vec::new();
                            self.lower_cond(&args[0], &mut tl, &mut fl)?;
                            let ignore_at = self.here();
                            if !fl.is_empty() {
                                self.emit(Instr::Ignore);
                            }
                            self.patch(&fl, ignore_at);
                            let cont = self.here();
                            self.patch(&tl, cont);
                            return Ok(());
                        }
                        _ => {}
                    }
                    let _ = self.lower_call(name, args, s.line)?;
                    return Ok(());
                }
                Err(self.err(s.line, "expression statements must be calls"))
            }
        }
    }

    fn apply_bin(
        &mut self,
        k: BinK,
        lv: Operand,
        lt: ValTy,
        rv: Operand,
        rt: ValTy,
        line: u32,
    ) -> LResult<(Operand, ValTy)> {
        // Pointer bump via += / ++.
        if let ValTy::Ptr(p) = lt {
            if !matches!(p, Pointee::Elem(_)) {
                return Err(self.err(line, "pointer arithmetic is only supported on element pointers"));
            }
            let off = match k {
                BinK::Add => rv,
                BinK::Sub => match rv {
                    Operand::Const(c) => Operand::Const(-c),
                    _ => return Err(self.err(line, "pointer -= supports constant offsets only")),
                },
                _ => return Err(self.err(line, "unsupported operation on pointers")),
            };
            let dst = self.tmp(lt, "ptr");
            self.emit(Instr::Binop { dst, op: BinOp::PtrAdd, a: lv, b: off, ty: IntTy::LONG });
            return Ok((Operand::Local(dst), lt));
        }
        let lit = self.int_ty_of(lt, line)?;
        let rit = self.int_ty_of(rt, line)?;
        let ty = Self::usual_arith(lit, rit);
        let op = match k {
            BinK::Add => BinOp::Add,
            BinK::Sub => BinOp::Sub,
            BinK::Mul => BinOp::Mul,
            BinK::Div => BinOp::Div,
            BinK::Rem => BinOp::Rem,
            BinK::BitAnd => BinOp::BitAnd,
            BinK::BitOr => BinOp::BitOr,
            BinK::BitXor => BinOp::BitXor,
            BinK::Shl => BinOp::Shl,
            BinK::Shr => BinOp::Shr,
        };
        let dst = self.tmp(ValTy::Int(ty), "bin");
        self.emit(Instr::Binop { dst, op, a: lv, b: rv, ty });
        Ok((Operand::Local(dst), ValTy::Int(ty)))
    }

    fn lower_loop(&mut self, cond: Option<&Expr>, upd: Option<&Stmt>, body: &[Stmt]) -> LResult<()> {
        let id = self.next_loop;
        self.next_loop += 1;
        let enter = self.emit(Instr::LoopEnter { id }) as u32;
        let cond_start = self.here();
        let mut tl = Vec::new();
        let mut fl = Vec::new();
        if let Some(c) = cond {
            self.lower_cond(c, &mut tl, &mut fl)?;
        }
        let body_start = self.here();
        self.patch(&tl, body_start);
        self.loop_stack.push(LoopFrame { brk: Vec::new(), cont: Vec::new() });
        let body_ok = self.lower_block(body);
        let frame = self.loop_stack.pop().unwrap();
        body_ok?;
        let upd_start = self.here();
        if let Some(u) = upd {
            self.lower_stmt(u)?;
        }
        let iter = self.emit(Instr::LoopIter { id }) as u32;
        self.emit(Instr::Jump { target: cond_start });
        let end = self.emit(Instr::LoopEnd { id }) as u32;
        self.patch(&fl, end);
        self.patch(&frame.brk, end);
        self.patch(&frame.cont, upd_start);
        self.loops.push((id, enter, iter, end));
        Ok(())
    }

    // ---- entry wiring ----

    fn classify(def: &StructDef) -> StructClass {
        let mut has_rec_ptr = false;
        let mut has_elem_ptr = false;
        for (ty, _) in &def.fields {
            match ty {
                Ty::Int(_) => {}
                Ty::Ptr(inner) => match &**inner {
                    Ty::Struct(_) => has_rec_ptr = true,
                    Ty::Int(_) => has_elem_ptr = true,
                    _ => return StructClass::Unsupported,
                },
                _ => return StructClass::Unsupported,
            }
        }
        match (has_rec_ptr, has_elem_ptr) {
            (true, true) => StructClass::Unsupported,
            (true, false) => StructClass::Linked,
            (false, true) => StructClass::ArrayCarrier,
            (false, false) => StructClass::Plain,
        }
    }

    /// Flatten an array-carrier struct into locals, one per field, pairing
    /// each `T *f` with its `int n_f` length.
    fn flatten_parts(
        &mut self,
        def: &StructDef,
        pname: &str,
        arrow: bool,
        shapes: &mut Vec<ParamShape>,
        line: u32,
    ) -> LResult<Binding> {
        let mut parts = BTreeMap::new();
        let len_fields: Vec<String> = def
            .fields
            .iter()
            .filter_map(|(ty, n)| match ty {
                Ty::Ptr(_) => Some(format!("n_{n}")),
                _ => None,
            })
            .collect();
        for (ty, fname) in &def.fields {
            match ty {
                Ty::Ptr(inner) => {
                    let Ty::Int(elem) = &**inner else {
                        return Err(self.err(line, "unsupported field type"));
                    };
                    let Some((lty, lname)) = def.fields.iter().find(|(_, n)| *n == format!("n_{fname}")) else {
                        return Err(self.err(
                            line,
                            format!("array field {fname} needs a matching `int n_{fname}` length field"),
                        ));
                    };
                    if !lty.is_int() {
                        return Err(self.err(line, format!("length field {lname} must be an integer")));
                    }
                    let data = self.tmp(ValTy::Ptr(Pointee::Elem(*elem)), "arr");
                    self.locals[data as usize].name = format!("{pname}.{fname}");
                    let len = self.tmp(ValTy::Int(IntTy::INT), "len");
                    self.locals[len as usize].name = format!("{pname}.n_{fname}");
                    parts.insert(fname.clone(), data);
                    parts.insert(format!("n_{fname}"), len);
                    shapes.push(ParamShape::ArrayRecord {
                        data,
                        len,
                        elem: *elem,
                        name: format!("{pname}.{fname}"),
                    });
                }
                Ty::Int(it) => {
                    if len_fields.contains(fname) {
                        continue; // bound to its array above
                    }
                    let l = self.tmp(ValTy::Int(*it), "fld");
                    self.locals[l as usize].name = format!("{pname}.{fname}");
                    parts.insert(fname.clone(), l);
                    shapes.push(ParamShape::Scalar { local: l, ty: *it });
                }
                _ => return Err(self.err(line, "unsupported field type")),
            }
        }
        Ok(Binding::Parts(parts, arrow))
    }

    pub fn run(unit: &'a Unit, name: &str) -> Result<ProgramIR, Vec<Diagnostic>> {
        let mut lw = Lower {
            unit,
            name: name.to_string(),
            records: Vec::new(),
            rec_ids: BTreeMap::new(),
            classes: BTreeMap::new(),
            struct_defs: BTreeMap::new(),
            funcs: BTreeMap::new(),
            consts: BTreeMap::new(),
            locals: Vec::new(),
            instrs: Vec::new(),
            lines: Vec::new(),
            cur_line: 0,
            loops: Vec::new(),
            loop_stack: Vec::new(),
            ret_stack: Vec::new(),
            scopes: vec![BTreeMap::new()],
            diags: Vec::new(),
            inline_depth: 0,
            next_loop: 0,
        };
        let r = lw.run_inner();
        match r {
            Ok(ir) if lw.diags.is_empty() => Ok(ir),
            _ => Err(lw.diags),
        }
    }

    fn run_inner(&mut self) -> LResult<ProgramIR> {
        let unit = self.unit;
        for (n, v) in &unit.consts {
            self.consts.insert(n.clone(), *v);
        }
        self.consts.entry("NULL".to_string()).or_insert(0);
        // Classify structs and register linked/plain ones as records.
        for def in &unit.structs {
            self.struct_defs.insert(def.name.clone(), def);
            self.classes.insert(def.name.clone(), Self::classify(def));
        }
        for def in &unit.structs {
            if matches!(self.classes[&def.name], StructClass::Linked | StructClass::Plain) {
                let id = self.records.len() as RecordId;
                self.rec_ids.insert(def.name.clone(), id);
                self.records.push(RecordDef { name: def.name.clone(), fields: Vec::new() });
            }
        }
        for def in &unit.structs {
            let Some(&rid) = self.rec_ids.get(&def.name) else { continue };
            let mut fields = Vec::new();
            for (ty, fname) in &def.fields {
                let vt = self.valty(ty, def.line)?;
                fields.push(FieldDef { name: fname.clone(), ty: vt });
            }
            self.records[rid as usize].fields = fields;
        }
        for f in &unit.funcs {
            self.funcs.insert(f.name.clone(), f);
        }
        let Some(entry) = unit.funcs.last() else {
            self.diags.push(Diagnostic::new(0, "no function to verify"));
            return Err(Fail);
        };
        check_recursion(&unit.funcs, &mut self.diags);
        if !self.diags.is_empty() {
            return Err(Fail);
        }

        // Entry parameters -> shapes.
        let mut shapes = Vec::new();
        let mut i = 0;
        while i < entry.params.len() {
            let p = &entry.params[i];
            match &p.ty {
                Ty::Int(it) => {
                    let l = self.named_local(&p.name, ValTy::Int(*it));
                    shapes.push(ParamShape::Scalar { local: l, ty: *it });
                    i += 1;
                }
                Ty::Ptr(inner) => match &**inner {
                    Ty::Int(elem) => {
                        let Some(np) = entry.params.get(i + 1) else {
                            return Err(self.err(
                                entry.line,
                                format!("array parameter {} must be followed by an int length parameter", p.name),
                            ));
                        };
                        let Ty::Int(nty) = np.ty else {
                            return Err(self.err(
                                entry.line,
                                format!("array parameter {} must be followed by an int length parameter", p.name),
                            ));
                        };
                        let data = self.named_local(&p.name, ValTy::Ptr(Pointee::Elem(*elem)));
                        let len = self.named_local(&np.name, ValTy::Int(nty));
                        shapes.push(ParamShape::ArrayRecord { data, len, elem: *elem, name: p.name.clone() });
                        i += 2;
                    }
                    Ty::Struct(sname) => {
                        let Some(def) = self.struct_defs.get(sname.as_str()).copied() else {
                            return Err(self.err(entry.line, format!("unknown struct {sname}")));
                        };
                        match self.classes[sname] {
                            StructClass::Linked | StructClass::Plain => {
                                let rid = self.rec_ids[sname];
                                let l = self.named_local(&p.name, ValTy::Ptr(Pointee::Record(rid)));
                                shapes.push(ParamShape::LinkedRecord { root: l, rec: rid, name: p.name.clone() });
                            }
                            StructClass::ArrayCarrier => {
                                let b = self.flatten_parts(def, &p.name, true, &mut shapes, entry.line)?;
                                self.scopes.last_mut().unwrap().insert(p.name.clone(), b);
                            }
                            StructClass::Unsupported => {
                                return Err(self.err(
                                    entry.line,
                                    format!("struct {sname} mixes linked and array fields; split it"),
                                ));
                            }
                        }
                        i += 1;
                    }
                    _ => return Err(self.err(entry.line, "unsupported parameter type")),
                },
                Ty::Struct(sname) => {
                    let Some(def) = self.struct_defs.get(sname.as_str()).copied() else {
                        return Err(self.err(entry.line, format!("unknown struct {sname}")));
                    };
                    if self.classes[sname] != StructClass::ArrayCarrier {
                        return Err(self.err(
                            entry.line,
                            format!("by-value struct parameters must be array carriers; pass struct {sname} by pointer"),
                        ));
                    }
                    let b = self.flatten_parts(def, &p.name, false, &mut shapes, entry.line)?;
                    self.scopes.last_mut().unwrap().insert(p.name.clone(), b);
                    i += 1;
                }
                Ty::Void => return Err(self.err(entry.line, "void parameter")),
            }
        }

        self.lower_block(&entry.body)?;
        self.emit(Instr::Halt);

        // Loop metadata: locals assigned anywhere in enter..=end.
        let mut loops = Vec::new();
        for &(id, enter, iter, end) in &self.loops {
            let mut relevant: Vec<LocalId> = Vec::new();
            for ins in &self.instrs[enter as usize..=end as usize] {
                let dst = match ins {
                    Instr::Assign { dst, .. }
                    | Instr::Unop { dst, .. }
                    | Instr::Binop { dst, .. }
                    | Instr::Load { dst, .. }
                    | Instr::Alloc { dst, .. }
                    | Instr::Nondet { dst, .. } => Some(*dst),
                    _ => None,
                };
                if let Some(d) = dst {
                    if !relevant.contains(&d) {
                        relevant.push(d);
                    }
                }
            }
            relevant.sort_unstable();
            loops.push(LoopMeta { id, enter, iter, end, relevant });
        }
        loops.sort_by_key(|l| l.id);

        Ok(ProgramIR {
            name: self.name.clone(),
            records: std::mem::take(&mut self.records),
            locals: std::mem::take(&mut self.locals),
            params: shapes,
            instrs: std::mem::take(&mut self.instrs),
            loops,
            lines: std::mem::take(&mut self.lines),
        })
    }
}

fn const_binop(k: BinK, a: i64, b: i64, ty: IntTy) -> Option<i64> {
    let raw = match k {
        BinK::Add => a.wrapping_add(b),
        BinK::Sub => a.wrapping_sub(b),
        BinK::Mul => a.wrapping_mul(b),
        BinK::Div => {
            if b == 0 {
                return None;
            }
            a.checked_div(b)?
        }
        BinK::Rem => {
            if b == 0 {
                return None;
            }
            a.checked_rem(b)?
        }
        BinK::BitAnd => a & b,
        BinK::BitOr => a | b,
        BinK::BitXor => a ^ b,
        BinK::Shl => {
            if !(0..64).contains(&b) {
                return None;
            }
            a.wrapping_shl(b as u32)
        }
        BinK::Shr => {
            if !(0..64).contains(&b) {
                return None;
            }
            a.wrapping_shr(b as u32)
        }
    };
    Some(ty.wrap(raw))
}

// ---- recursion handling ----

fn expr_calls(e: &Expr, out: &mut Vec<String>) {
    match &e.kind {
        ExprK::Call(n, args) => {
            out.push(n.clone());
            for a in args {
                expr_calls(a, out);
            }
        }
        ExprK::Un(_, x) | ExprK::LNot(x) | ExprK::Deref(x) | ExprK::Cast(_, x) | ExprK::Field(x, _, _) => {
            expr_calls(x, out)
        }
        ExprK::Bin(_, a, b)
        | ExprK::Cmp(_, a, b)
        | ExprK::LAnd(a, b)
        | ExprK::LOr(a, b)
        | ExprK::Index(a, b) => {
            expr_calls(a, out);
            expr_calls(b, out);
        }
        ExprK::Tern(a, b, c) => {
            expr_calls(a, out);
            expr_calls(b, out);
            expr_calls(c, out);
        }
        ExprK::Num(_) | ExprK::Var(_) | ExprK::SizeofStruct(_) => {}
    }
}

fn stmt_calls(s: &Stmt, out: &mut Vec<String>) {
    match &s.kind {
        StmtK::Decl(_, _, Some(e)) | StmtK::Expr(e) | StmtK::Return(Some(e)) => expr_calls(e, out),
        StmtK::Decl(..) | StmtK::Return(None) | StmtK::Break | StmtK::Continue => {}
        StmtK::Assign(a, b) | StmtK::OpAssign(_, a, b) => {
            expr_calls(a, out);
            expr_calls(b, out);
        }
        StmtK::IncDec(a, _) => expr_calls(a, out),
        StmtK::If(c, t, e) => {
            expr_calls(c, out);
            for x in t.iter().chain(e) {
                stmt_calls(x, out);
            }
        }
        StmtK::While(c, b) => {
            expr_calls(c, out);
            for x in b {
                stmt_calls(x, out);
            }
        }
        StmtK::For(i, c, u, b) => {
            if let Some(i) = i {
                stmt_calls(i, out);
            }
            if let Some(c) = c {
                expr_calls(c, out);
            }
            if let Some(u) = u {
                stmt_calls(u, out);
            }
            for x in b {
                stmt_calls(x, out);
            }
        }
        StmtK::Block(b) => {
            for x in b {
                stmt_calls(x, out);
            }
        }
    }
}

fn check_recursion(funcs: &[FuncDef], diags: &mut Vec<Diagnostic>) {
    let names: BTreeMap<&str, usize> = funcs.iter().enumerate().map(|(i, f)| (f.name.as_str(), i)).collect();
    let mut edges: Vec<Vec<usize>> = vec![Vec::new(); funcs.len()];
    for (i, f) in funcs.iter().enumerate() {
        let mut calls = Vec::new();
        for s in &f.body {
            stmt_calls(s, &mut calls);
        }
        for c in calls {
            if let Some(&j) = names.get(c.as_str()) {
                edges[i].push(j);
            }
        }
    }
    // Any cycle (including self loops) is rejected; self tail calls were
    // already rewritten into loops before this runs.
    fn dfs(v: usize, edges: &[Vec<usize>], state: &mut [u8], hit: &mut Option<usize>) {
        state[v] = 1;
        for &w in &edges[v] {
            if state[w] == 1 {
                hit.get_or_insert(w);
            } else if state[w] == 0 {
                dfs(w, edges, state, hit);
            }
        }
        state[v] = 2;
    }
    let mut state = vec![0u8; funcs.len()];
    let mut hit = None;
    for v in 0..funcs.len() {
        if state[v] == 0 {
            dfs(v, &edges, &mut state, &mut hit);
        }
    }
    if let Some(v) = hit {
        diags.push(Diagnostic::new(
            funcs[v].line,
            format!("recursion in {} is not supported (only direct tail recursion, which becomes a loop)", funcs[v].name),
        ));
    }
}

/// Rewrite `return f(args)` self tail calls into parameter reassignment
/// plus `continue` inside a `while (1)` wrapper. Only applies when every
/// self call has that shape and none sits inside a nested loop (a
/// `continue` there would bind to the wrong loop).
pub fn tail_transform(f: &mut FuncDef) {
    fn scan(stmts: &[Stmt], name: &str, in_loop: bool, tail_ok: &mut bool, any: &mut bool) {
        for s in stmts {
            match &s.kind {
                StmtK::Return(Some(e)) => {
                    if let ExprK::Call(n, args) = &e.kind {
                        if n == name {
                            *any = true;
                            if in_loop {
                                *tail_ok = false;
                            }
                            let mut inner = Vec::new();
                            for a in args {
                                expr_calls(a, &mut inner);
                            }
                            if inner.iter().any(|c| c == name) {
                                *tail_ok = false;
                            }
                            continue;
                        }
                    }
                    let mut calls = Vec::new();
                    expr_calls(e, &mut calls);
                    if calls.iter().any(|c| c == name) {
                        *any = true;
                        *tail_ok = false;
                    }
                }
                StmtK::If(c, t, e) => {
                    let mut calls = Vec::new();
                    expr_calls(c, &mut calls);
                    if calls.iter().any(|c| c == name) {
                        *any = true;
                        *tail_ok = false;
                    }
                    scan(t, name, in_loop, tail_ok, any);
                    scan(e, name, in_loop, tail_ok, any);
                }
                StmtK::While(c, b) => {
                    let mut calls = Vec::new();
                    expr_calls(c, &mut calls);
                    if calls.iter().any(|c| c == name) {
                        *any = true;
                        *tail_ok = false;
                    }
                    scan(b, name, true, tail_ok, any);
                }
                StmtK::For(i, c, u, b) => {
                    let mut calls = Vec::new();
                    if let Some(i) = i {
                        stmt_calls(i, &mut calls);
                    }
                    if let Some(c) = c {
                        expr_calls(c, &mut calls);
                    }
                    if let Some(u) = u {
                        stmt_calls(u, &mut calls);
                    }
                    if calls.iter().any(|c| c == name) {
                        *any = true;
                        *tail_ok = false;
                    }
                    scan(b, name, true, tail_ok, any);
                }
                StmtK::Block(b) => scan(b, name, in_loop, tail_ok, any),
                other => {
                    let mut calls = Vec::new();
                    stmt_calls(&Stmt { kind: other.clone(), line: s.line }, &mut calls);
                    if calls.iter().any(|c| c == name) {
                        *any = true;
                        *tail_ok = false;
                    }
                }
            }
        }
    }
    let mut tail_ok = true;
    let mut any = false;
    scan(&f.body, &f.name, false, &mut tail_ok, &mut any);
    if !any || !tail_ok {
        return;
    }

    fn rewrite(stmts: &mut Vec<Stmt>, name: &str, params: &[String]) {
        for s in stmts.iter_mut() {
            let line = s.line;
            match &mut s.kind {
                StmtK::Return(Some(e)) => {
                    if let ExprK::Call(n, args) = &e.kind {
                        if n == name {
                            let mut seq = Vec::new();
                            let tmps: Vec<String> =
                                (0..args.len()).map(|i| format!("__tail{i}")).collect();
                            for (i, a) in args.iter().enumerate() {
                                seq.push(Stmt {
                                    kind: StmtK::Decl(infer_arg_ty(), tmps[i].clone(), Some(a.clone())),
                                    line,
                                });
                            }
                            for (i, p) in params.iter().enumerate() {
                                seq.push(Stmt {
                                    kind: StmtK::Assign(
                                        Expr { kind: ExprK::Var(p.clone()), line },
                                        Expr { kind: ExprK::Var(tmps[i].clone()), line },
                                    ),
                                    line,
                                });
                            }
                            seq.push(Stmt { kind: StmtK::Continue, line });
                            s.kind = StmtK::Block(seq);
                        }
                    }
                }
                StmtK::If(_, t, e) => {
                    rewrite(t, name, params);
                    rewrite(e, name, params);
                }
                StmtK::Block(b) => rewrite(b, name, params),
                _ => {}
            }
        }
    }
    // Placeholder type: replaced below with the declared param type.
    fn infer_arg_ty() -> Ty {
        Ty::Int(IntTy::INT)
    }

    let params: Vec<String> = f.params.iter().map(|p| p.name.clone()).collect();
    let mut body = std::mem::take(&mut f.body);
    rewrite(&mut body, &f.name, &params);
    // Patch the tail temp declarations with the real parameter types.
    fn fix_tmp_types(stmts: &mut Vec<Stmt>, f_params: &[Param]) {
        for s in stmts.iter_mut() {
            match &mut s.kind {
                StmtK::Block(b) => {
                    let is_tail_seq = b
                        .first()
                        .map(|x| matches!(&x.kind, StmtK::Decl(_, n, _) if n.starts_with("__tail")))
                        .unwrap_or(false);
                    if is_tail_seq {
                        for x in b.iter_mut() {
                            if let StmtK::Decl(ty, n, _) = &mut x.kind {
                                if let Some(i) = n.strip_prefix("__tail").and_then(|t| t.parse::<usize>().ok()) {
                                    *ty = f_params[i].ty.clone();
                                }
                            }
                        }
                    } else {
                        fix_tmp_types(b, f_params);
                    }
                }
                StmtK::If(_, t, e) => {
                    fix_tmp_types(t, f_params);
                    fix_tmp_types(e, f_params);
                }
                StmtK::While(_, b) | StmtK::For(_, _, _, b) => fix_tmp_types(b, f_params),
                _ => {}
            }
        }
    }
    fix_tmp_types(&mut body, &f.params);
    let line = f.line;
    f.body = vec![Stmt {
        kind: StmtK::While(Expr { kind: ExprK::Num(1), line }, {
            body.push(Stmt { kind: StmtK::Break, line });
            body
        }),
        line,
    }];
}
