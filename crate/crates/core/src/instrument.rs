//! Safety-check instrumentation.
//!
//! Inserts an explicit `Check` before every operation that could fault:
//! `Deref` before loads/stores, `DivNonZero` before division/remainder,
//! and (only when overflow checking is requested) `NoOverflow` before
//! signed and unsigned add/sub/mul. Instrumentation is idempotent: an
//! access already guarded by an identical immediately-preceding check is
//! not guarded twice.

use crate::ir::*;

fn checks_for(ins: &Instr, overflow: bool) -> Vec<CheckKind> {
    let mut out = Vec::new();
    match ins {
        Instr::Load { addr, field, .. } => out.push(CheckKind::Deref { addr: *addr, field: *field }),
        Instr::Store { addr, field, .. } => out.push(CheckKind::Deref { addr: *addr, field: *field }),
        Instr::Binop { op, a, b, ty, .. } => {
            match op {
                BinOp::Div | BinOp::Rem => out.push(CheckKind::DivNonZero { divisor: *b }),
                BinOp::Add | BinOp::Sub | BinOp::Mul if overflow => {
                    out.push(CheckKind::NoOverflow { op: *op, a: *a, b: *b, ty: *ty })
                }
                _ => {}
            }
            if matches!(op, BinOp::Div | BinOp::Rem) && overflow {
                out.push(CheckKind::NoOverflow { op: *op, a: *a, b: *b, ty: *ty });
            }
        }
        _ => {}
    }
    out
}

/// Insert safety checks, remapping all control-flow targets and loop
/// metadata to the new instruction layout.
pub fn instrument_checks(ir: &ProgramIR, overflow_checks: bool) -> ProgramIR {
    let n = ir.instrs.len();
    // Pass 1: how many checks precede each original instruction, skipping
    // ones already present immediately before it (idempotence).
    let mut inserted: Vec<Vec<CheckKind>> = Vec::with_capacity(n);
    for (i, ins) in ir.instrs.iter().enumerate() {
        let mut want = checks_for(ins, overflow_checks);
        // Drop checks that already appear directly before this instruction.
        let mut j = i;
        while j > 0 {
            if let Instr::Check { kind } = &ir.instrs[j - 1] {
                want.retain(|k| k != kind);
                j -= 1;
            } else {
                break;
            }
        }
        inserted.push(want);
    }
    // group_start[i]: new id of the start of instruction i's emitted group
    // (its checks, then the instruction). Control transfers to i must run
    // the checks, so targets remap to the group start.
    let mut group_start = vec![0u32; n + 1];
    let mut pos = 0u32;
    for i in 0..n {
        group_start[i] = pos;
        pos += inserted[i].len() as u32 + 1;
    }
    group_start[n] = pos;

    let mut instrs = Vec::with_capacity(pos as usize);
    let mut lines = Vec::with_capacity(pos as usize);
    for (i, ins) in ir.instrs.iter().enumerate() {
        for k in &inserted[i] {
            instrs.push(Instr::Check { kind: *k });
            lines.push(ir.lines[i]);
        }
        let mut ins2 = ins.clone();
        match &mut ins2 {
            Instr::Branch { then_t, else_t, .. } => {
                *then_t = group_start[*then_t as usize];
                *else_t = group_start[*else_t as usize];
            }
            Instr::Jump { target } => *target = group_start[*target as usize],
            _ => {}
        }
        instrs.push(ins2);
        lines.push(ir.lines[i]);
    }

    let loops = ir
        .loops
        .iter()
        .map(|lm| LoopMeta {
            id: lm.id,
            enter: group_start[lm.enter as usize],
            iter: group_start[lm.iter as usize],
            end: group_start[lm.end as usize],
            relevant: lm.relevant.clone(),
        })
        .collect();

    ProgramIR {
        name: ir.name.clone(),
        records: ir.records.clone(),
        locals: ir.locals.clone(),
        params: ir.params.clone(),
        instrs,
        loops,
        lines,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mini_ir() -> ProgramIR {
        // 0: load x = l->0 ; 1: branch x<0 -> 0 else 2 ; 2: halt
        ProgramIR {
            name: "t".into(),
            records: vec![RecordDef {
                name: "node".into(),
                fields: vec![FieldDef { name: "v".into(), ty: ValTy::Int(IntTy::INT) }],
            }],
            locals: vec![
                LocalDecl { name: "l".into(), ty: ValTy::Ptr(Pointee::Record(0)) },
                LocalDecl { name: "x".into(), ty: ValTy::Int(IntTy::INT) },
            ],
            params: vec![ParamShape::LinkedRecord { root: 0, rec: 0, name: "l".into() }],
            instrs: vec![
                Instr::Load { dst: 1, addr: 0, field: Some(0) },
                Instr::Branch { op: CmpOp::Lt, a: Operand::Local(1), b: Operand::Const(0), then_t: 0, else_t: 2 },
                Instr::Halt,
            ],
            loops: vec![],
            lines: vec![1, 2, 3],
        }
    }

    #[test]
    fn inserts_deref_check_and_remaps_targets() {
        let out = instrument_checks(&mini_ir(), false);
        assert!(matches!(out.instrs[0], Instr::Check { kind: CheckKind::Deref { addr: 0, field: Some(0) } }));
        assert!(matches!(out.instrs[1], Instr::Load { .. }));
        // Branch back-edge must re-run the check.
        match &out.instrs[2] {
            Instr::Branch { then_t, else_t, .. } => {
                assert_eq!(*then_t, 0);
                assert_eq!(*else_t, 3);
            }
            other => panic!("expected branch, got {:?}", other),
        }
    }

    #[test]
    fn instrumentation_is_idempotent() {
        let once = instrument_checks(&mini_ir(), false);
        let twice = instrument_checks(&once, false);
        assert_eq!(once, twice);
    }

    #[test]
    fn overflow_checks_only_when_requested() {
        let ir = ProgramIR {
            name: "t".into(),
            records: vec![],
            locals: vec![LocalDecl { name: "x".into(), ty: ValTy::Int(IntTy::INT) }],
            params: vec![],
            instrs: vec![
                Instr::Binop { dst: 0, op: BinOp::Add, a: Operand::Const(1), b: Operand::Const(2), ty: IntTy::INT },
                Instr::Halt,
            ],
            loops: vec![],
            lines: vec![1, 2],
        };
        let plain = instrument_checks(&ir, false);
        assert_eq!(plain.instrs.len(), 2);
        let checked = instrument_checks(&ir, true);
        assert_eq!(checked.instrs.len(), 3);
        assert!(matches!(checked.instrs[0], Instr::Check { kind: CheckKind::NoOverflow { .. } }));
    }
}
