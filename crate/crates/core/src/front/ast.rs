//! Abstract syntax for the supported C subset.

use crate::ir::CmpOp;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ty {
    Int(crate::ir::IntTy),
    Ptr(Box<Ty>),
    Struct(String),
    Void,
}

impl Ty {
    pub fn is_int(&self) -> bool {
        matches!(self, Ty::Int(_))
    }
}

#[derive(Debug, Clone)]
pub struct StructDef {
    pub name: String,
    pub fields: Vec<(Ty, String)>,
    pub line: u32,
}

#[derive(Debug, Clone)]
pub struct Param {
    pub ty: Ty,
    pub name: String,
}

#[derive(Debug, Clone)]
pub struct FuncDef {
    pub ret: Ty,
    pub name: String,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
    pub line: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnK {
    Neg,
    BitNot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinK {
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
}

#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprK,
    pub line: u32,
}

#[derive(Debug, Clone)]
pub enum ExprK {
    Num(i64),
    Var(String),
    Un(UnK, Box<Expr>),
    Bin(BinK, Box<Expr>, Box<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    LAnd(Box<Expr>, Box<Expr>),
    LOr(Box<Expr>, Box<Expr>),
    LNot(Box<Expr>),
    Tern(Box<Expr>, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
    Index(Box<Expr>, Box<Expr>),
    Deref(Box<Expr>),
    /// `base.field` (`arrow` false) or `base->field` (`arrow` true).
    Field(Box<Expr>, String, bool),
    Cast(Ty, Box<Expr>),
    SizeofStruct(String),
}

#[derive(Debug, Clone)]
pub struct Stmt {
    pub kind: StmtK,
    pub line: u32,
}

#[derive(Debug, Clone)]
pub enum StmtK {
    Decl(Ty, String, Option<Expr>),
    Assign(Expr, Expr),
    OpAssign(BinK, Expr, Expr),
    /// `lv += delta` sugar for `++`/`--`.
    IncDec(Expr, i64),
    If(Expr, Vec<Stmt>, Vec<Stmt>),
    While(Expr, Vec<Stmt>),
    For(Option<Box<Stmt>>, Option<Expr>, Option<Box<Stmt>>, Vec<Stmt>),
    Return(Option<Expr>),
    /// Bare call in statement position.
    Expr(Expr),
    Break,
    Continue,
    Block(Vec<Stmt>),
}

#[derive(Debug, Clone, Default)]
pub struct Unit {
    pub structs: Vec<StructDef>,
    pub funcs: Vec<FuncDef>,
    /// `const int NAME = value;` globals.
    pub consts: Vec<(String, i64)>,
}
