//! Recursive-descent parser for the supported C subset. Constructs the
//! AST or a list of line-tagged diagnostics; unsupported constructs are
//! named explicitly rather than producing generic syntax errors.

use super::ast::*;
use super::lex::{SpTok, Tok};
use crate::diag::Diagnostic;
use crate::ir::{CmpOp, IntTy};

pub struct Parser {
    toks: Vec<SpTok>,
    pos: usize,
    diags: Vec<Diagnostic>,
}

/// Error sentinel: the diagnostic has already been recorded.
struct Fail;

type PResult<T> = Result<T, Fail>;

impl Parser {
    pub fn new(toks: Vec<SpTok>) -> Parser {
        Parser { toks, pos: 0, diags: Vec::new() }
    }

    fn line(&self) -> u32 {
        self.toks.get(self.pos).or_else(|| self.toks.last()).map_or(0, |t| t.line)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, off: usize) -> Option<&Tok> {
        self.toks.get(self.pos + off).map(|t| &t.tok)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn is_p(&self, p: &str) -> bool {
        matches!(self.peek(), Some(Tok::P(q)) if *q == p)
    }

    fn eat_p(&mut self, p: &str) -> bool {
        if self.is_p(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn err(&mut self, msg: impl Into<String>) -> Fail {
        self.diags.push(Diagnostic::new(self.line(), msg));
        Fail
    }

    fn expect_p(&mut self, p: &str) -> PResult<()> {
        if self.eat_p(p) {
            Ok(())
        } else {
            let found = match self.peek() {
                Some(Tok::Ident(s)) => format!("`{s}`"),
                Some(Tok::Num(n)) => format!("`{n}`"),
                Some(Tok::P(q)) => format!("`{q}`"),
                None => "end of file".into(),
            };
            Err(self.err(format!("expected `{p}`, found {found}")))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err("expected identifier")),
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    /// Does a type start here? (Used to distinguish declarations from
    /// expression statements and casts.)
    fn at_type(&self) -> bool {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                matches!(s.as_str(), "int" | "unsigned" | "signed" | "char" | "long" | "void" | "const" | "struct" | "union")
            }
            _ => false,
        }
    }

    fn parse_base_type(&mut self) -> PResult<Ty> {
        self.eat_kw("const");
        if self.eat_kw("union") {
            return Err(self.err("unions are not supported"));
        }
        if self.eat_kw("struct") {
            let name = self.ident()?;
            return Ok(Ty::Struct(name));
        }
        if self.eat_kw("void") {
            return Ok(Ty::Void);
        }
        if self.eat_kw("unsigned") {
            if self.eat_kw("char") {
                return Ok(Ty::Int(IntTy::UCHAR));
            }
            if self.eat_kw("long") {
                return Ok(Ty::Int(IntTy { bits: 64, signed: false }));
            }
            self.eat_kw("int");
            return Ok(Ty::Int(IntTy::UINT));
        }
        if self.eat_kw("signed") {
            if self.eat_kw("char") {
                return Ok(Ty::Int(IntTy::CHAR));
            }
            self.eat_kw("int");
            return Ok(Ty::Int(IntTy::INT));
        }
        if self.eat_kw("char") {
            return Ok(Ty::Int(IntTy::CHAR));
        }
        if self.eat_kw("long") {
            self.eat_kw("int");
            return Ok(Ty::Int(IntTy::LONG));
        }
        if self.eat_kw("int") {
            return Ok(Ty::Int(IntTy::INT));
        }
        Err(self.err("expected type"))
    }

    /// Parse a full type: base plus pointer stars. Double indirection is
    /// rejected here since nothing downstream can represent it.
    fn parse_type(&mut self) -> PResult<Ty> {
        let mut t = self.parse_base_type()?;
        while self.is_p("*") {
            self.pos += 1;
            self.eat_kw("const");
            if matches!(t, Ty::Ptr(_)) {
                return Err(self.err("pointers to pointers are not supported"));
            }
            t = Ty::Ptr(Box::new(t));
        }
        Ok(t)
    }

    pub fn parse_unit(mut self) -> Result<Unit, Vec<Diagnostic>> {
        let mut unit = Unit::default();
        while self.peek().is_some() {
            if self.parse_top(&mut unit).is_err() {
                // Resynchronize on `;` or `}` to surface further errors.
                while let Some(t) = self.bump() {
                    if t == Tok::P(";") || t == Tok::P("}") {
                        break;
                    }
                }
            }
        }
        if self.diags.is_empty() {
            Ok(unit)
        } else {
            Err(self.diags)
        }
    }

    fn parse_top(&mut self, unit: &mut Unit) -> PResult<()> {
        let line = self.line();
        if self.eat_kw("extern") {
            // Prototype of an external helper: parse and discard.
            let _ = self.parse_type()?;
            let _ = self.ident()?;
            self.expect_p("(")?;
            let mut depth = 1;
            while depth > 0 {
                match self.bump() {
                    Some(Tok::P("(")) => depth += 1,
                    Some(Tok::P(")")) => depth -= 1,
                    Some(_) => {}
                    None => return Err(self.err("unterminated prototype")),
                }
            }
            self.expect_p(";")?;
            return Ok(());
        }
        if self.eat_kw("typedef") {
            return Err(self.err("typedef is not supported"));
        }
        if self.eat_kw("union") {
            return Err(self.err("unions are not supported"));
        }
        if self.is_kw("struct") && matches!(self.peek_at(2), Some(Tok::P("{"))) {
            self.pos += 1;
            let name = self.ident()?;
            self.expect_p("{")?;
            let mut fields = Vec::new();
            while !self.eat_p("}") {
                if self.is_kw("union") {
                    return Err(self.err("unions are not supported"));
                }
                let ft = self.parse_type()?;
                let fname = self.ident()?;
                if self.is_p("[") {
                    return Err(self.err("array fields are not supported; use a pointer plus an `n_<name>` length field"));
                }
                if self.is_p("(") {
                    return Err(self.err("function pointers are not supported"));
                }
                self.expect_p(";")?;
                fields.push((ft, fname));
            }
            self.expect_p(";")?;
            unit.structs.push(StructDef { name, fields, line });
            return Ok(());
        }
        // `const int NAME = <num>;` global constant.
        if self.is_kw("const") {
            let save = self.pos;
            let _ = self.parse_type()?;
            let name = self.ident()?;
            if self.eat_p("=") {
                let e = self.parse_expr()?;
                self.expect_p(";")?;
                match const_eval(&e) {
                    Some(v) => {
                        unit.consts.push((name, v));
                        return Ok(());
                    }
                    None => return Err(self.err("global const initializer must be a constant expression")),
                }
            }
            self.pos = save;
        }
        // Function definition or a rejected global.
        let rt = self.parse_type()?;
        let name = self.ident()?;
        if self.is_p("=") || self.is_p(";") {
            return Err(self.err("mutable global variables are not supported"));
        }
        if self.is_p("[") {
            return Err(self.err("global arrays are not supported"));
        }
        self.expect_p("(")?;
        let mut params = Vec::new();
        if !self.eat_p(")") {
            loop {
                if self.eat_kw("void") && self.is_p(")") {
                    self.expect_p(")")?;
                    break;
                }
                let pt = self.parse_type()?;
                let pname = self.ident()?;
                if self.is_p("[") {
                    return Err(self.err("array parameters must be written as pointers"));
                }
                params.push(Param { ty: pt, name: pname });
                if self.eat_p(")") {
                    break;
                }
                self.expect_p(",")?;
            }
        }
        if self.eat_p(";") {
            // Forward declaration: ignore.
            return Ok(());
        }
        let body = self.parse_block()?;
        unit.funcs.push(FuncDef { ret: rt, name, params, body, line });
        Ok(())
    }

    fn parse_block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_p("{")?;
        let mut out = Vec::new();
        while !self.eat_p("}") {
            if self.peek().is_none() {
                return Err(self.err("unterminated block"));
            }
            out.push(self.parse_stmt()?);
        }
        Ok(out)
    }

    fn parse_stmt(&mut self) -> PResult<Stmt> {
        let line = self.line();
        let k = self.parse_stmt_kind()?;
        Ok(Stmt { kind: k, line })
    }

    fn parse_stmt_kind(&mut self) -> PResult<StmtK> {
        if self.is_p("{") {
            return Ok(StmtK::Block(self.parse_block()?));
        }
        if self.eat_kw("if") {
            self.expect_p("(")?;
            let c = self.parse_expr()?;
            self.expect_p(")")?;
            let t = self.parse_stmt_or_block()?;
            let e = if self.eat_kw("else") { self.parse_stmt_or_block()? } else { Vec::new() };
            return Ok(StmtK::If(c, t, e));
        }
        if self.eat_kw("while") {
            self.expect_p("(")?;
            let c = self.parse_expr()?;
            self.expect_p(")")?;
            let b = self.parse_stmt_or_block()?;
            return Ok(StmtK::While(c, b));
        }
        if self.is_kw("do") {
            return Err(self.err("do-while loops are not supported; use while"));
        }
        if self.eat_kw("for") {
            self.expect_p("(")?;
            let init = if self.is_p(";") { None } else { Some(Box::new(self.parse_simple_stmt()?)) };
            self.expect_p(";")?;
            let cond = if self.is_p(";") { None } else { Some(self.parse_expr()?) };
            self.expect_p(";")?;
            let upd = if self.is_p(")") { None } else { Some(Box::new(self.parse_simple_stmt()?)) };
            self.expect_p(")")?;
            let b = self.parse_stmt_or_block()?;
            return Ok(StmtK::For(init, cond, upd, b));
        }
        if self.eat_kw("return") {
            if self.eat_p(";") {
                return Ok(StmtK::Return(None));
            }
            let e = self.parse_expr()?;
            self.expect_p(";")?;
            return Ok(StmtK::Return(Some(e)));
        }
        if self.eat_kw("break") {
            self.expect_p(";")?;
            return Ok(StmtK::Break);
        }
        if self.eat_kw("continue") {
            self.expect_p(";")?;
            return Ok(StmtK::Continue);
        }
        if self.is_kw("switch") || self.is_kw("goto") {
            return Err(self.err("switch and goto are not supported"));
        }
        let s = self.parse_simple_stmt()?;
        self.expect_p(";")?;
        Ok(s.kind)
    }

    fn parse_stmt_or_block(&mut self) -> PResult<Vec<Stmt>> {
        if self.is_p("{") {
            self.parse_block()
        } else {
            Ok(vec![self.parse_stmt()?])
        }
    }

    /// Declaration / assignment / call / increment, without the trailing
    /// semicolon (shared by statements and `for` headers).
    fn parse_simple_stmt(&mut self) -> PResult<Stmt> {
        let line = self.line();
        if self.at_type() && !self.is_cast_paren() {
            let ty = self.parse_type()?;
            let name = self.ident()?;
            if self.is_p("[") {
                return Err(self.err("local arrays are not supported; operate on parameter data"));
            }
            let init = if self.eat_p("=") { Some(self.parse_expr()?) } else { None };
            return Ok(Stmt { kind: StmtK::Decl(ty, name, init), line });
        }
        if self.eat_p("++") {
            let lv = self.parse_unary()?;
            return Ok(Stmt { kind: StmtK::IncDec(lv, 1), line });
        }
        if self.eat_p("--") {
            let lv = self.parse_unary()?;
            return Ok(Stmt { kind: StmtK::IncDec(lv, -1), line });
        }
        let e = self.parse_expr()?;
        if self.eat_p("=") {
            let rhs = self.parse_expr()?;
            return Ok(Stmt { kind: StmtK::Assign(e, rhs), line });
        }
        for (p, k) in [
            ("+=", BinK::Add),
            ("-=", BinK::Sub),
            ("*=", BinK::Mul),
            ("/=", BinK::Div),
            ("%=", BinK::Rem),
            ("&=", BinK::BitAnd),
            ("|=", BinK::BitOr),
            ("^=", BinK::BitXor),
            ("<<=", BinK::Shl),
            (">>=", BinK::Shr),
        ] {
            if self.eat_p(p) {
                let rhs = self.parse_expr()?;
                return Ok(Stmt { kind: StmtK::OpAssign(k, e, rhs), line });
            }
        }
        if self.eat_p("++") {
            return Ok(Stmt { kind: StmtK::IncDec(e, 1), line });
        }
        if self.eat_p("--") {
            return Ok(Stmt { kind: StmtK::IncDec(e, -1), line });
        }
        if matches!(e.kind, ExprK::Call(..)) {
            return Ok(Stmt { kind: StmtK::Expr(e), line });
        }
        Err(self.err("expression statements must be calls or assignments"))
    }

    fn is_cast_paren(&self) -> bool {
        false // `at_type` is only consulted at statement starts.
    }

    fn parse_expr(&mut self) -> PResult<Expr> {
        self.parse_ternary()
    }

    fn parse_ternary(&mut self) -> PResult<Expr> {
        let line = self.line();
        let c = self.parse_lor()?;
        if self.eat_p("?") {
            let t = self.parse_expr()?;
            self.expect_p(":")?;
            let e = self.parse_ternary()?;
            return Ok(Expr { kind: ExprK::Tern(Box::new(c), Box::new(t), Box::new(e)), line });
        }
        Ok(c)
    }

    fn parse_lor(&mut self) -> PResult<Expr> {
        let mut l = self.parse_land()?;
        while self.is_p("||") {
            let line = self.line();
            self.pos += 1;
            let r = self.parse_land()?;
            l = Expr { kind: ExprK::LOr(Box::new(l), Box::new(r)), line };
        }
        Ok(l)
    }

    fn parse_land(&mut self) -> PResult<Expr> {
        let mut l = self.parse_bitor()?;
        while self.is_p("&&") {
            let line = self.line();
            self.pos += 1;
            let r = self.parse_bitor()?;
            l = Expr { kind: ExprK::LAnd(Box::new(l), Box::new(r)), line };
        }
        Ok(l)
    }

    fn bin_level(
        &mut self,
        ops: &[(&str, BinK)],
        next: fn(&mut Parser) -> PResult<Expr>,
    ) -> PResult<Expr> {
        let mut l = next(self)?;
        'outer: loop {
            for (p, k) in ops {
                if self.is_p(p) {
                    let line = self.line();
                    self.pos += 1;
                    let r = next(self)?;
                    l = Expr { kind: ExprK::Bin(*k, Box::new(l), Box::new(r)), line };
                    continue 'outer;
                }
            }
            return Ok(l);
        }
    }

    fn parse_bitor(&mut self) -> PResult<Expr> {
        self.bin_level(&[("|", BinK::BitOr)], Parser::parse_bitxor)
    }

    fn parse_bitxor(&mut self) -> PResult<Expr> {
        self.bin_level(&[("^", BinK::BitXor)], Parser::parse_bitand)
    }

    fn parse_bitand(&mut self) -> PResult<Expr> {
        self.bin_level(&[("&", BinK::BitAnd)], Parser::parse_eqcmp)
    }

    fn parse_eqcmp(&mut self) -> PResult<Expr> {
        let mut l = self.parse_relcmp()?;
        loop {
            let op = if self.is_p("==") {
                CmpOp::Eq
            } else if self.is_p("!=") {
                CmpOp::Ne
            } else {
                return Ok(l);
            };
            let line = self.line();
            self.pos += 1;
            let r = self.parse_relcmp()?;
            l = Expr { kind: ExprK::Cmp(op, Box::new(l), Box::new(r)), line };
        }
    }

    fn parse_relcmp(&mut self) -> PResult<Expr> {
        let mut l = self.parse_shift()?;
        loop {
            let op = if self.is_p("<=") {
                CmpOp::Le
            } else if self.is_p(">=") {
                CmpOp::Ge
            } else if self.is_p("<") {
                CmpOp::Lt
            } else if self.is_p(">") {
                CmpOp::Gt
            } else {
                return Ok(l);
            };
            let line = self.line();
            self.pos += 1;
            let r = self.parse_shift()?;
            l = Expr { kind: ExprK::Cmp(op, Box::new(l), Box::new(r)), line };
        }
    }

    fn parse_shift(&mut self) -> PResult<Expr> {
        self.bin_level(&[("<<", BinK::Shl), (">>", BinK::Shr)], Parser::parse_add)
    }

    fn parse_add(&mut self) -> PResult<Expr> {
        self.bin_level(&[("+", BinK::Add), ("-", BinK::Sub)], Parser::parse_mul)
    }

    fn parse_mul(&mut self) -> PResult<Expr> {
        self.bin_level(&[("*", BinK::Mul), ("/", BinK::Div), ("%", BinK::Rem)], Parser::parse_unary)
    }

    fn parse_unary(&mut self) -> PResult<Expr> {
        let line = self.line();
        if self.eat_p("!") {
            let e = self.parse_unary()?;
            return Ok(Expr { kind: ExprK::LNot(Box::new(e)), line });
        }
        if self.eat_p("~") {
            let e = self.parse_unary()?;
            return Ok(Expr { kind: ExprK::Un(UnK::BitNot, Box::new(e)), line });
        }
        if self.eat_p("-") {
            let e = self.parse_unary()?;
            if let ExprK::Num(n) = e.kind {
                return Ok(Expr { kind: ExprK::Num(n.wrapping_neg()), line });
            }
            return Ok(Expr { kind: ExprK::Un(UnK::Neg, Box::new(e)), line });
        }
        if self.eat_p("*") {
            let e = self.parse_unary()?;
            return Ok(Expr { kind: ExprK::Deref(Box::new(e)), line });
        }
        if self.is_p("&") {
            return Err(self.err("address-of is not supported"));
        }
        if self.is_p("++") || self.is_p("--") {
            return Err(self.err("increment is only supported as a statement"));
        }
        // Cast: `(` followed by a type keyword.
        if self.is_p("(") {
            if let Some(Tok::Ident(s)) = self.peek_at(1) {
                if matches!(s.as_str(), "int" | "unsigned" | "signed" | "char" | "long" | "void" | "struct" | "const" | "union") {
                    self.pos += 1;
                    let ty = self.parse_type()?;
                    self.expect_p(")")?;
                    let e = self.parse_unary()?;
                    return Ok(Expr { kind: ExprK::Cast(ty, Box::new(e)), line });
                }
            }
        }
        self.parse_postfix()
    }

    fn parse_postfix(&mut self) -> PResult<Expr> {
        let mut e = self.parse_primary()?;
        loop {
            let line = self.line();
            if self.eat_p("[") {
                let i = self.parse_expr()?;
                self.expect_p("]")?;
                e = Expr { kind: ExprK::Index(Box::new(e), Box::new(i)), line };
            } else if self.eat_p("->") {
                let f = self.ident()?;
                e = Expr { kind: ExprK::Field(Box::new(e), f, true), line };
            } else if self.eat_p(".") {
                let f = self.ident()?;
                e = Expr { kind: ExprK::Field(Box::new(e), f, false), line };
            } else {
                return Ok(e);
            }
        }
    }

    fn parse_primary(&mut self) -> PResult<Expr> {
        let line = self.line();
        match self.bump() {
            Some(Tok::Num(n)) => Ok(Expr { kind: ExprK::Num(n), line }),
            Some(Tok::Ident(name)) => {
                if name == "sizeof" {
                    self.expect_p("(")?;
                    if !self.eat_kw("struct") {
                        return Err(self.err("sizeof is only supported on struct types"));
                    }
                    let s = self.ident()?;
                    self.expect_p(")")?;
                    return Ok(Expr { kind: ExprK::SizeofStruct(s), line });
                }
                if self.eat_p("(") {
                    let mut args = Vec::new();
                    if !self.eat_p(")") {
                        loop {
                            args.push(self.parse_expr()?);
                            if self.eat_p(")") {
                                break;
                            }
                            self.expect_p(",")?;
                        }
                    }
                    return Ok(Expr { kind: ExprK::Call(name, args), line });
                }
                Ok(Expr { kind: ExprK::Var(name), line })
            }
            Some(Tok::P("(")) => {
                let e = self.parse_expr()?;
                self.expect_p(")")?;
                Ok(e)
            }
            other => {
                let what = match other {
                    Some(Tok::P(p)) => format!("`{p}`"),
                    _ => "end of file".into(),
                };
                Err(self.err(format!("expected expression, found {what}")))
            }
        }
    }
}

fn const_eval(e: &Expr) -> Option<i64> {
    match &e.kind {
        ExprK::Num(n) => Some(*n),
        ExprK::Un(UnK::Neg, x) => const_eval(x).map(|v| v.wrapping_neg()),
        _ => None,
    }
}

pub fn parse(toks: Vec<SpTok>) -> Result<Unit, Vec<Diagnostic>> {
    Parser::new(toks).parse_unit()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::front::lex::lex;

    fn parse_src(src: &str) -> Result<Unit, Vec<Diagnostic>> {
        parse(lex(src).unwrap())
    }

    #[test]
    fn parses_struct_and_function() {
        let u = parse_src(
            "struct node { int val; struct node *next; };\n\
             int test(struct node *l, int k) { int n = 0; while (l != 0) { n = n + 1; l = l->next; } return n; }",
        )
        .unwrap();
        assert_eq!(u.structs.len(), 1);
        assert_eq!(u.funcs.len(), 1);
        assert_eq!(u.funcs[0].params.len(), 2);
    }

    #[test]
    fn rejects_named_constructs() {
        for (src, needle) in [
            ("union u { int a; };", "unions"),
            ("int f(void) { int a[4]; return 0; }", "local arrays"),
            ("int g;", "mutable global"),
            ("int f(void) { do { } while (1); return 0; }", "do-while"),
            ("int f(int **p) { return 0; }", "pointers to pointers"),
            ("int f(int x) { int *p; p = &x; return 0; }", "address-of"),
        ] {
            let e = parse_src(src).unwrap_err();
            assert!(
                e.iter().any(|d| d.msg.contains(needle)),
                "expected {needle:?} diagnostic for {src:?}, got {e:?}"
            );
        }
    }

    #[test]
    fn precedence_shapes() {
        let u = parse_src("int f(int a, int b) { int c = a + b * 2 < a << 1; return c; }").unwrap();
        // (a + (b*2)) < (a << 1)
        let StmtK::Decl(_, _, Some(init)) = &u.funcs[0].body[0].kind else { panic!() };
        assert!(matches!(init.kind, ExprK::Cmp(CmpOp::Lt, _, _)));
    }

    #[test]
    fn ternary_and_logic() {
        let u = parse_src("int f(int a) { int r = a > 0 && a < 9 ? a : 0 - a; return r; }").unwrap();
        let StmtK::Decl(_, _, Some(init)) = &u.funcs[0].body[0].kind else { panic!() };
        assert!(matches!(init.kind, ExprK::Tern(..)));
    }
}
