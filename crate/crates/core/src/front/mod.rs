//! Frontend for the C subset: lexing, parsing, and lowering to the
//! instruction-level IR. The last function in a file is the entry point
//! under verification; everything else is inlined into it.

mod ast;
mod lex;
mod lower;
mod parse;

pub use ast::Unit;
pub use lex::lex;
pub use parse::parse;

use crate::diag::Diagnostic;
use crate::ir::ProgramIR;

/// Compile a source file to IR. Returns all diagnostics on failure.
pub fn compile(source: &str, name: &str) -> Result<ProgramIR, Vec<Diagnostic>> {
    let toks = lex(source)?;
    let mut unit = parse(toks)?;
    for f in &mut unit.funcs {
        lower::tail_transform(f);
    }
    lower::Lower::run(&unit, name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instrument::instrument_checks;
    use crate::interp::{enumerate_reachable, trace_size, OracleConfig, OracleOutcome};
    use crate::ir::{Instr, ParamShape};

    fn must_compile(src: &str) -> ProgramIR {
        match compile(src, "test") {
            Ok(ir) => ir,
            Err(ds) => panic!("expected compile success, got: {ds:?}"),
        }
    }

    fn must_fail(src: &str, needle: &str) {
        match compile(src, "test") {
            Ok(ir) => panic!("expected rejection containing {needle:?}, got IR:\n{}", ir.dump()),
            Err(ds) => {
                assert!(
                    ds.iter().any(|d| d.msg.contains(needle)),
                    "no diagnostic contains {needle:?}: {ds:?}"
                );
            }
        }
    }

    #[test]
    fn array_param_pairs_with_length() {
        let ir = must_compile("void f(int *a, int n) { if (n > 0) { a[0] = 1; } }");
        assert_eq!(ir.params.len(), 1);
        assert!(matches!(ir.params[0], ParamShape::ArrayRecord { .. }));
    }

    #[test]
    fn loop_markers_bracket_bodies() {
        let ir = must_compile("void f(int *a, int n) { int i; for (i = 0; i < n; i++) { a[i] = 0; } }");
        assert_eq!(ir.loops.len(), 1);
        let lm = &ir.loops[0];
        assert!(matches!(ir.instrs[lm.enter as usize], Instr::LoopEnter { id } if id == lm.id));
        assert!(matches!(ir.instrs[lm.iter as usize], Instr::LoopIter { id } if id == lm.id));
        assert!(matches!(ir.instrs[lm.end as usize], Instr::LoopEnd { id } if id == lm.id));
        // i is assigned in the update; it must be listed as relevant.
        let i_local = ir.locals.iter().position(|l| l.name == "i").unwrap() as u32;
        assert!(lm.relevant.contains(&i_local), "relevant: {:?}", lm.relevant);
    }

    #[test]
    fn linked_struct_becomes_record_param() {
        let ir = must_compile(
            "struct node { int val; struct node *next; };\n\
             void f(struct node *l) { while (l != 0) { l = l->next; } }",
        );
        assert_eq!(ir.records.len(), 1);
        assert!(matches!(ir.params[0], ParamShape::LinkedRecord { .. }));
    }

    #[test]
    fn array_carrier_struct_is_flattened() {
        let ir = must_compile(
            "struct buf { int *data; int n_data; int cap; };\n\
             void f(struct buf *b) { int i; for (i = 0; i < b->n_data; i++) { b->data[i] = 0; } }",
        );
        assert_eq!(ir.records.len(), 0, "carrier structs are not records");
        assert_eq!(ir.params.len(), 2);
        assert!(matches!(ir.params[0], ParamShape::ArrayRecord { .. }));
        assert!(matches!(ir.params[1], ParamShape::Scalar { .. }));
    }

    #[test]
    fn helpers_are_inlined() {
        let ir = must_compile(
            "int min(int a, int b) { if (a < b) { return a; } return b; }\n\
             void f(int x, int y) { int m; m = min(x, y); assert(m <= x); }",
        );
        // No call instruction exists in the IR; min's body is inline.
        assert!(ir.instrs.iter().any(|i| matches!(i, Instr::Fail)));
    }

    #[test]
    fn tail_recursion_becomes_loop() {
        let ir = must_compile(
            "struct node { int val; struct node *next; };\n\
             int find(struct node *l, int k) {\n\
               if (l == 0) { return 0; }\n\
               if (l->val == k) { return 1; }\n\
               return find(l->next, k);\n\
             }\n\
             void f(struct node *l, int k) { int r; r = find(l, k); assert(r == 0 || r == 1); }",
        );
        assert_eq!(ir.loops.len(), 1, "self tail call should have produced one loop");
    }

    #[test]
    fn non_tail_recursion_rejected() {
        must_fail(
            "int depth(struct node *t);\n\
             struct node { int val; struct node *left; struct node *right; };\n\
             int depth(struct node *t) { if (t == 0) { return 0; } return 1 + depth(t->left); }\n\
             void f(struct node *t) { int d; d = depth(t); assert(d >= 0); }",
            "recursion",
        );
    }

    #[test]
    fn mutual_recursion_rejected() {
        must_fail(
            "int odd(int n);\n\
             int even(int n) { if (n == 0) { return 1; } return odd(n - 1); }\n\
             int odd(int n) { if (n == 0) { return 0; } return even(n - 1); }\n\
             void f(int n) { assume(n >= 0); assert(even(n) <= 1); }",
            "recursion",
        );
    }

    #[test]
    fn lowering_rejections() {
        let cases: &[(&str, &str)] = &[
            ("void f(int *a, int n) { int x; x = (int)a; }", "pointer-to-integer"),
            ("void f(int x) { int *p; p = (int*)x; }", "integer-to-pointer"),
            ("void f(int *a, int n) { if (a < a + 1) { return; } }", "ordered pointer"),
            ("void f(int x, unsigned int y) { if (x < y) { return; } }", "mixed signed/unsigned"),
            ("void f(int *a) { a[0] = 1; }", "length parameter"),
            ("struct m { int *d; int n_d; struct m *next; }; void f(struct m *p) { }", "mixes linked and array"),
            ("void f(int n) { int a; fred(n); }", "unknown function"),
            ("void f(int *a, int n) { free(a); }", "free is not supported"),
        ];
        for (src, needle) in cases {
            must_fail(src, needle);
        }
    }

    #[test]
    fn mixed_sign_compare_against_literal_is_allowed() {
        // Literals adapt to the other side, as C programmers expect.
        must_compile("void f(unsigned int n) { if (n > 0) { return; } }");
    }

    #[test]
    fn short_circuit_evaluation_order() {
        // `n > 0 && a[0] == 0`: the index only executes under the guard, so
        // the concrete oracle must find no failure at any input size.
        let ir = must_compile(
            "void f(int *a, int n) { if (n > 0 && a[0] == 0) { assert(a[0] <= 0); } }",
        );
        let ir = instrument_checks(&ir, false);
        let out = enumerate_reachable(&ir, &OracleConfig::default()).expect("no unchecked faults");
        assert!(
            matches!(out, OracleOutcome::SafeUpToBound { .. }),
            "expected safety, got {out:?}"
        );
    }

    #[test]
    fn oracle_catches_off_by_one_through_frontend() {
        let ir = must_compile(
            "void f(int *a, int n) { int i; for (i = 0; i <= n; i++) { a[i] = 0; } }",
        );
        let ir = instrument_checks(&ir, false);
        let out = enumerate_reachable(&ir, &OracleConfig::default()).expect("no unchecked faults");
        let OracleOutcome::FailingTrace(w) = out else {
            panic!("expected a failing trace, got {out:?}");
        };
        assert!(trace_size(&ir, &w.trace) <= 3, "minimal witness should be small");
    }

    #[test]
    fn golden_zero_fill_then_verify_is_concretely_safe() {
        let ir = must_compile(
            "void f(int *s, int n) {\n\
               int i;\n\
               int j;\n\
               for (i = 0; i < n; i++) { s[i] = 0; }\n\
               for (j = 0; j < n; j++) { assert(s[j] == 0); }\n\
             }",
        );
        let ir = instrument_checks(&ir, false);
        let out = enumerate_reachable(&ir, &OracleConfig::default()).expect("no unchecked faults");
        assert!(matches!(out, OracleOutcome::SafeUpToBound { .. }), "got {out:?}");
    }

    #[test]
    fn linked_list_walk_is_concretely_safe() {
        let ir = must_compile(
            "struct node { int val; struct node *next; };\n\
             void f(struct node *l) {\n\
               int n;\n\
               n = 0;\n\
               while (l != 0) { n = n + 1; l = l->next; }\n\
               assert(n >= 0);\n\
             }",
        );
        let ir = instrument_checks(&ir, false);
        let out = enumerate_reachable(&ir, &OracleConfig::default()).expect("no unchecked faults");
        assert!(matches!(out, OracleOutcome::SafeUpToBound { .. }), "got {out:?}");
    }

    #[test]
    fn malloc_links_into_lists() {
        let ir = must_compile(
            "struct node { int val; struct node *next; };\n\
             void f(struct node *l, int v) {\n\
               struct node *fresh;\n\
               fresh = (struct node*)malloc(sizeof(struct node));\n\
               fresh->val = v;\n\
               fresh->next = l;\n\
               assert(fresh->val == v);\n\
             }",
        );
        let ir = instrument_checks(&ir, false);
        let out = enumerate_reachable(&ir, &OracleConfig::default()).expect("no unchecked faults");
        assert!(matches!(out, OracleOutcome::SafeUpToBound { .. }), "got {out:?}");
    }

    #[test]
    fn nondet_and_assume_guard_traces() {
        let ir = must_compile(
            "void f(int *a, int n) {\n\
               int k;\n\
               k = nondet_int();\n\
               assume(k >= 0);\n\
               assume(k < n);\n\
               a[k] = 7;\n\
               assert(a[k] == 7);\n\
             }",
        );
        let ir = instrument_checks(&ir, false);
        let out = enumerate_reachable(&ir, &OracleConfig::default()).expect("no unchecked faults");
        assert!(matches!(out, OracleOutcome::SafeUpToBound { .. }), "got {out:?}");
    }

    #[test]
    fn char_arithmetic_wraps_at_width() {
        // 127 + 1 stays an int under promotion: assigning back to char wraps.
        let ir = must_compile(
            "void f(char c) {\n\
               assume(c == 127);\n\
               c = c + 1;\n\
               assert(c == -128);\n\
             }",
        );
        let ir = instrument_checks(&ir, false);
        let out = enumerate_reachable(&ir, &OracleConfig::default()).expect("no unchecked faults");
        assert!(matches!(out, OracleOutcome::SafeUpToBound { .. }), "got {out:?}");
    }

    #[test]
    fn division_by_zero_is_caught() {
        let ir = must_compile("void f(int x, int y) { int q; q = x / y; assert(q * y <= x * x + 1); }");
        let ir = instrument_checks(&ir, false);
        let out = enumerate_reachable(&ir, &OracleConfig::default()).expect("no unchecked faults");
        assert!(matches!(out, OracleOutcome::FailingTrace(_)), "got {out:?}");
    }

    #[test]
    fn ir_dump_is_stable_shape() {
        let ir = must_compile("void f(int n) { if (n > 0) { n = n - 1; } }");
        let dump = ir.dump();
        assert!(dump.contains("branch"), "dump:\n{dump}");
        assert!(dump.contains("halt"), "dump:\n{dump}");
    }
}
