//! Incremental difference-logic solver with equality propagation and
//! congruence over uninterpreted store/select.
//!
//! Facts are difference constraints `x − y ≤ c` over interned terms, plus
//! equalities, disequalities, uninterpreted applications, array
//! select/store definitions, and windowed array-agreement facts. The
//! difference layer keeps a sparse all-pairs closure updated by single-
//! source relaxation on every assertion (the workload is assertion-heavy
//! and query-heavy; rebuilding a full closure per query would dominate).
//! The congruence layer runs to fixpoint on demand: equal arguments merge
//! application results, store/select obey read-over-write, and agreement
//! windows propagate through paired or out-of-window stores.
//!
//! `entails` is sound but incomplete: `Yes` answers are backed by the
//! closure, everything else is `Unknown`. Inconsistency (a negative cycle
//! or an equality contradicting a disequality) is sticky and reported
//! separately: queries against an inconsistent state answer `Yes`
//! vacuously.

use crate::ir::{InstrId, IntTy};
use std::collections::{BTreeMap, HashMap};

pub type MajorId = u32;

/// Flat solver terms. Compound structure (applications, selects, stores)
/// lives in facts, keyed by flat result terms, so terms stay `Copy`.
/// Terms are stateless names: a term denotes one value for the whole
/// life of a trace (rebinding happens in the trace's environment, never
/// by rewriting terms), so stepping a trace never rewrites facts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    /// Distinguished origin; `x ≤ c` is `x − Zero ≤ c`.
    Zero,
    /// Integer constant; interning pins it to the origin.
    Cst(i64),
    /// Free variable (randomized instances and tests).
    Var { t: u8, l: u32 },
    /// Input-state anchor of one trace: parameter values, initial array
    /// contents objects, initial size. `slot` is a stable binding-site
    /// index (locals first, then region objects, then size).
    Init { t: u8, slot: u32 },
    /// Deterministically named value created mid-trace: assignment and
    /// load results, nondet draws, wrap results, store objects. `occ`
    /// counts prior executions of the same instruction by the same
    /// trace, so equal-path herds agree on names.
    Fresh { t: u8, instr: InstrId, occ: u16 },
    /// Canonical post-widening name for the value bound at a binding
    /// site, so widened herds on one path share a finite vocabulary.
    Widened { t: u8, slot: u32 },
    /// Element count of an array region as seen by one trace (extents
    /// never change after allocation).
    RegionLen { t: u8, major: MajorId },
}

/// A window bound: `base + add`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bound {
    pub base: Term,
    pub add: i64,
}

impl Bound {
    pub fn konst(c: i64) -> Bound {
        Bound { base: Term::Zero, add: c }
    }
    pub fn of(base: Term, add: i64) -> Bound {
        Bound { base, add }
    }
}

/// Uninterpreted operation tags for non-affine results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AppOp {
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
    Neg,
    BitNot,
    /// Wrap into a type's range; payload is (bits, signed).
    Wrap(u8, bool),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Fact {
    /// x − y ≤ c
    Diff { x: Term, y: Term, c: i64 },
    Eq(Term, Term),
    Ne(Term, Term),
    /// z = op(a, b); unary ops pass `Zero` as b.
    App { z: Term, op: AppOp, a: Term, b: Term },
    /// z = select(obj, idx)
    Select { z: Term, obj: Term, idx: Term },
    /// z = store(obj, idx, val)
    Store { z: Term, obj: Term, idx: Term, val: Term },
    /// ∀p ∈ [lo, hi): select(a, p) = select(b, p)
    Agree { a: Term, b: Term, lo: Bound, hi: Bound },
}

impl Fact {
    pub fn diff(x: Term, y: Term, c: i64) -> Fact {
        Fact::Diff { x, y, c }
    }
    /// x ≤ c (against the origin).
    pub fn le_const(x: Term, c: i64) -> Fact {
        Fact::Diff { x, y: Term::Zero, c }
    }
    /// x ≥ c (against the origin).
    pub fn ge_const(x: Term, c: i64) -> Fact {
        Fact::Diff { x: Term::Zero, y: x, c: -c }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tri {
    Yes,
    Unknown,
}

impl Tri {
    pub fn is_yes(self) -> bool {
        self == Tri::Yes
    }
}

const MAX_ROUNDS: usize = 64;
const MAX_DERIVED: usize = 4096;

#[derive(Debug, Clone, Default)]
pub struct Solver {
    terms: Vec<Term>,
    ids: HashMap<Term, u32>,
    /// dist[a][b] = tightest known w with (b − a ≤ w): edge a→b.
    rows: Vec<BTreeMap<u32, i64>>,
    cols: Vec<BTreeMap<u32, i64>>,
    nes: Vec<(u32, u32)>,
    apps: Vec<(u32, AppOp, u32, u32)>,
    selects: Vec<(u32, u32, u32)>,
    stores: Vec<(u32, u32, u32, u32)>,
    agrees: Vec<(u32, u32, Bound, Bound)>,
    inconsistent: bool,
    dirty: bool,
}

impl Solver {
    pub fn new() -> Solver {
        Solver::default()
    }

    fn intern(&mut self, t: Term) -> u32 {
        if let Some(id) = self.ids.get(&t) {
            return *id;
        }
        let id = self.terms.len() as u32;
        self.terms.push(t);
        self.ids.insert(t, id);
        self.rows.push(BTreeMap::new());
        self.cols.push(BTreeMap::new());
        if let Term::Cst(c) = t {
            let zero = self.intern(Term::Zero);
            self.insert_edge(zero, id, c);
            self.insert_edge(id, zero, -c);
        }
        id
    }

    fn dist(&self, a: u32, b: u32) -> Option<i64> {
        if a == b {
            return Some(0);
        }
        self.rows[a as usize].get(&b).copied()
    }

    /// Insert edge a→b with weight w (meaning b − a ≤ w), propagating
    /// through the sparse closure.
    fn insert_edge(&mut self, a: u32, b: u32, w: i64) {
        if self.inconsistent {
            return;
        }
        if let Some(d) = self.dist(a, b) {
            if d <= w {
                return;
            }
        }
        // All improved pairs (p, q) route p→a→b→q.
        let mut preds: Vec<(u32, i64)> = vec![(a, 0)];
        preds.extend(self.cols[a as usize].iter().map(|(p, d)| (*p, *d)));
        let mut succs: Vec<(u32, i64)> = vec![(b, 0)];
        succs.extend(self.rows[b as usize].iter().map(|(q, d)| (*q, *d)));
        for (p, dp) in &preds {
            for (q, dq) in &succs {
                let nd = dp.saturating_add(w).saturating_add(*dq);
                if *p == *q {
                    if nd < 0 {
                        self.inconsistent = true;
                        return;
                    }
                    continue;
                }
                let cur = self.dist(*p, *q);
                if cur.map_or(true, |c| nd < c) {
                    self.rows[*p as usize].insert(*q, nd);
                    self.cols[*q as usize].insert(*p, nd);
                }
            }
        }
        self.dirty = true;
    }

    pub fn assert_fact(&mut self, f: &Fact) {
        if self.inconsistent {
            return;
        }
        match f {
            Fact::Diff { x, y, c } => {
                let xi = self.intern(*x);
                let yi = self.intern(*y);
                self.insert_edge(yi, xi, *c);
            }
            Fact::Eq(x, y) => {
                let xi = self.intern(*x);
                let yi = self.intern(*y);
                self.insert_edge(xi, yi, 0);
                self.insert_edge(yi, xi, 0);
            }
            Fact::Ne(x, y) => {
                let xi = self.intern(*x);
                let yi = self.intern(*y);
                self.nes.push((xi, yi));
                self.dirty = true;
            }
            Fact::App { z, op, a, b } => {
                let zi = self.intern(*z);
                let ai = self.intern(*a);
                let bi = self.intern(*b);
                if !self.apps.contains(&(zi, *op, ai, bi)) {
                    self.apps.push((zi, *op, ai, bi));
                    self.dirty = true;
                }
            }
            Fact::Select { z, obj, idx } => {
                let zi = self.intern(*z);
                let oi = self.intern(*obj);
                let ii = self.intern(*idx);
                if !self.selects.contains(&(zi, oi, ii)) {
                    self.selects.push((zi, oi, ii));
                    self.dirty = true;
                }
            }
            Fact::Store { z, obj, idx, val } => {
                let zi = self.intern(*z);
                let oi = self.intern(*obj);
                let ii = self.intern(*idx);
                let vi = self.intern(*val);
                if !self.stores.contains(&(zi, oi, ii, vi)) {
                    self.stores.push((zi, oi, ii, vi));
                    self.dirty = true;
                }
            }
            Fact::Agree { a, b, lo, hi } => {
                let ai = self.intern(*a);
                let bi = self.intern(*b);
                self.intern(lo.base);
                self.intern(hi.base);
                if !self.agrees.contains(&(ai, bi, *lo, *hi)) {
                    self.agrees.push((ai, bi, *lo, *hi));
                    self.dirty = true;
                }
            }
        }
    }

    pub fn assert_all(&mut self, facts: &[Fact]) {
        for f in facts {
            self.assert_fact(f);
        }
    }

    fn eq_ids(&self, a: u32, b: u32) -> bool {
        a == b || (self.dist(a, b) == Some(0) && self.dist(b, a) == Some(0))
            || (self.dist(a, b).is_some_and(|d| d <= 0) && self.dist(b, a).is_some_and(|d| d <= 0))
    }

    fn ne_ids(&self, a: u32, b: u32) -> bool {
        if self.dist(a, b).is_some_and(|d| d <= -1) || self.dist(b, a).is_some_and(|d| d <= -1) {
            return true;
        }
        // A recorded disequality translates: x != y entails x+c != y+c
        // whenever both offsets are exact.
        let shift = |x: u32, to: u32| -> Option<i64> {
            let fwd = self.dist(x, to)?;
            let bck = self.dist(to, x)?;
            (fwd == -bck).then_some(fwd)
        };
        self.nes.iter().any(|(x, y)| {
            let straight = matches!((shift(*x, a), shift(*y, b)), (Some(p), Some(q)) if p == q);
            let crossed = matches!((shift(*x, b), shift(*y, a)), (Some(p), Some(q)) if p == q);
            straight || crossed
        })
    }

    /// Entailed bound value of `b.base + b.add` is compared as a term-pair
    /// query: lo ≤ x ⟺ x − base ≥ add ⟺ base − x ≤ −add.
    fn bound_le_id(&self, b: &Bound, x: u32) -> bool {
        let base = match self.ids.get(&b.base) {
            Some(i) => *i,
            None => return false,
        };
        self.dist(x, base).is_some_and(|d| d <= -b.add)
    }

    fn id_lt_bound(&self, x: u32, b: &Bound) -> bool {
        let base = match self.ids.get(&b.base) {
            Some(i) => *i,
            None => return false,
        };
        // x < base + add ⟺ x − base ≤ add − 1
        self.dist(base, x).is_some_and(|d| d <= b.add - 1)
    }

    /// Run the congruence/array-axiom fixpoint. Derived equalities feed the
    /// difference closure; derived selects/agreements are appended with a
    /// cap as a termination safety valve (stopping early is sound).
    pub fn close(&mut self) {
        if !self.dirty || self.inconsistent {
            self.dirty = false;
            return;
        }
        for _round in 0..MAX_ROUNDS {
            self.dirty = false;
            // Application congruence (z = op(a,b)).
            let apps = self.apps.clone();
            for i in 0..apps.len() {
                for j in (i + 1)..apps.len() {
                    let (z1, o1, a1, b1) = apps[i];
                    let (z2, o2, a2, b2) = apps[j];
                    if o1 == o2 && !self.eq_ids(z1, z2) && self.eq_ids(a1, a2) && self.eq_ids(b1, b2) {
                        self.insert_edge(z1, z2, 0);
                        self.insert_edge(z2, z1, 0);
                    }
                }
            }
            // Select congruence.
            let selects = self.selects.clone();
            for i in 0..selects.len() {
                for j in (i + 1)..selects.len() {
                    let (z1, o1, i1) = selects[i];
                    let (z2, o2, i2) = selects[j];
                    if !self.eq_ids(z1, z2) && self.eq_ids(o1, o2) && self.eq_ids(i1, i2) {
                        self.insert_edge(z1, z2, 0);
                        self.insert_edge(z2, z1, 0);
                    }
                }
            }
            // Store congruence.
            let stores = self.stores.clone();
            for i in 0..stores.len() {
                for j in (i + 1)..stores.len() {
                    let (z1, o1, i1, v1) = stores[i];
                    let (z2, o2, i2, v2) = stores[j];
                    if !self.eq_ids(z1, z2) && self.eq_ids(o1, o2) && self.eq_ids(i1, i2) && self.eq_ids(v1, v2) {
                        self.insert_edge(z1, z2, 0);
                        self.insert_edge(z2, z1, 0);
                    }
                }
            }
            // Read-over-write: select from (an object equal to) a store result.
            let selects = self.selects.clone();
            let stores = self.stores.clone();
            for (z, obj, idx) in &selects {
                for (sz, sobj, sidx, sval) in &stores {
                    if !self.eq_ids(*obj, *sz) {
                        continue;
                    }
                    if self.eq_ids(*idx, *sidx) {
                        if !self.eq_ids(*z, *sval) {
                            self.insert_edge(*z, *sval, 0);
                            self.insert_edge(*sval, *z, 0);
                        }
                    } else if self.ne_ids(*idx, *sidx) {
                        // Push the read below the store.
                        let f = (*z, *sobj, *idx);
                        if !self.selects.contains(&f) && self.selects.len() < MAX_DERIVED {
                            self.selects.push(f);
                            self.dirty = true;
                        }
                    }
                }
            }
            // Agreement windows.
            let agrees = self.agrees.clone();
            for (a, b, lo, hi) in &agrees {
                // R1: in-window selects from both sides are equal.
                for (z1, o1, i1) in &selects {
                    if !self.eq_ids(*o1, *a) {
                        continue;
                    }
                    for (z2, o2, i2) in &selects {
                        if self.eq_ids(*z1, *z2) || !self.eq_ids(*o2, *b) || !self.eq_ids(*i1, *i2) {
                            continue;
                        }
                        if self.bound_le_id(lo, *i1) && self.id_lt_bound(*i1, hi) {
                            let (z1c, z2c) = (*z1, *z2);
                            self.insert_edge(z1c, z2c, 0);
                            self.insert_edge(z2c, z1c, 0);
                        }
                    }
                }
                // R2/R3: propagate the window through stores.
                for (sz, sobj, sidx, sval) in &stores {
                    let on_a = self.eq_ids(*sobj, *a);
                    let on_b = self.eq_ids(*sobj, *b);
                    if !on_a && !on_b {
                        continue;
                    }
                    // R3: store outside the window keeps agreement with the
                    // other side.
                    let outside = self.id_lt_bound(*sidx, lo) || self.bound_le_id(hi, *sidx);
                    if outside {
                        let f = if on_a { (*sz, *b, *lo, *hi) } else { (*a, *sz, *lo, *hi) };
                        if !self.agrees.contains(&f) && self.agrees.len() < MAX_DERIVED {
                            self.agrees.push(f);
                            self.dirty = true;
                        }
                    }
                    // R2: paired store of an equal value at an equal index.
                    if on_a {
                        for (tz, tobj, tidx, tval) in &stores {
                            if self.eq_ids(*tobj, *b) && self.eq_ids(*sidx, *tidx) && self.eq_ids(*sval, *tval) {
                                let f = (*sz, *tz, *lo, *hi);
                                if !self.agrees.contains(&f) && self.agrees.len() < MAX_DERIVED {
                                    self.agrees.push(f);
                                    self.dirty = true;
                                }
                            }
                        }
                    }
                }
            }
            // Contrapositive of select congruence: reads over one object
            // yielding provably different values sit at different indices.
            let selects = self.selects.clone();
            for i in 0..selects.len() {
                for j in (i + 1)..selects.len() {
                    let (z1, o1, i1) = selects[i];
                    let (z2, o2, i2) = selects[j];
                    if self.eq_ids(o1, o2)
                        && self.ne_ids(z1, z2)
                        && !self.ne_ids(i1, i2)
                        && self.nes.len() < MAX_DERIVED
                    {
                        self.nes.push((i1, i2));
                        self.dirty = true;
                    }
                }
            }
            // Integer sharpening: x ≤ y and x ≠ y give x ≤ y - 1.
            let nes = self.nes.clone();
            for (x, y) in &nes {
                if self.dist(*x, *y) == Some(0) {
                    self.insert_edge(*x, *y, -1);
                }
                if self.dist(*y, *x) == Some(0) {
                    self.insert_edge(*y, *x, -1);
                }
            }
            // Disequality vs equality contradiction.
            for (x, y) in &nes {
                if self.eq_ids(*x, *y) {
                    self.inconsistent = true;
                    return;
                }
            }
            if !self.dirty {
                break;
            }
        }
        self.dirty = false;
    }

    pub fn consistent(&mut self) -> bool {
        self.close();
        !self.inconsistent
    }

    /// Tightest entailed c with x − y ≤ c.
    pub fn tightest(&mut self, x: Term, y: Term) -> Option<i64> {
        self.close();
        let xi = *self.ids.get(&x)?;
        let yi = *self.ids.get(&y)?;
        self.dist(yi, xi)
    }

    /// Entailed constant value of a term, if its bounds against the origin
    /// pinch to a point.
    pub fn const_of(&mut self, x: Term) -> Option<i64> {
        let hi = self.tightest(x, Term::Zero)?;
        let lo = self.tightest(Term::Zero, x)?;
        if hi == -lo {
            Some(hi)
        } else {
            None
        }
    }

    pub fn entails(&mut self, f: &Fact) -> Tri {
        self.close();
        if self.inconsistent {
            return Tri::Yes;
        }
        let yes = match f {
            Fact::Diff { x, y, c } => {
                if x == y {
                    *c >= 0
                } else {
                    match (self.ids.get(x), self.ids.get(y)) {
                        (Some(xi), Some(yi)) => self.dist(*yi, *xi).is_some_and(|d| d <= *c),
                        _ => false,
                    }
                }
            }
            Fact::Eq(x, y) => {
                x == y
                    || match (self.ids.get(x), self.ids.get(y)) {
                        (Some(xi), Some(yi)) => self.eq_ids(*xi, *yi),
                        _ => false,
                    }
            }
            Fact::Ne(x, y) => match (self.ids.get(x), self.ids.get(y)) {
                (Some(xi), Some(yi)) => self.ne_ids(*xi, *yi),
                _ => false,
            },
            Fact::App { z, op, a, b } => {
                match (self.ids.get(z), self.ids.get(a), self.ids.get(b)) {
                    (Some(zi), Some(ai), Some(bi)) => {
                        let (zi, ai, bi) = (*zi, *ai, *bi);
                        self.apps
                            .clone()
                            .iter()
                            .any(|(z2, o2, a2, b2)| *o2 == *op && self.eq_ids(*z2, zi) && self.eq_ids(*a2, ai) && self.eq_ids(*b2, bi))
                    }
                    _ => false,
                }
            }
            Fact::Select { z, obj, idx } => match (self.ids.get(z), self.ids.get(obj), self.ids.get(idx)) {
                (Some(zi), Some(oi), Some(ii)) => {
                    let (zi, oi, ii) = (*zi, *oi, *ii);
                    self.selects
                        .clone()
                        .iter()
                        .any(|(z2, o2, i2)| self.eq_ids(*z2, zi) && self.eq_ids(*o2, oi) && self.eq_ids(*i2, ii))
                }
                _ => false,
            },
            Fact::Store { z, obj, idx, val } => {
                match (self.ids.get(z), self.ids.get(obj), self.ids.get(idx), self.ids.get(val)) {
                    (Some(zi), Some(oi), Some(ii), Some(vi)) => {
                        let (zi, oi, ii, vi) = (*zi, *oi, *ii, *vi);
                        self.stores.clone().iter().any(|(z2, o2, i2, v2)| {
                            self.eq_ids(*z2, zi) && self.eq_ids(*o2, oi) && self.eq_ids(*i2, ii) && self.eq_ids(*v2, vi)
                        })
                    }
                    _ => false,
                }
            }
            Fact::Agree { a, b, lo, hi } => match (self.ids.get(a), self.ids.get(b)) {
                (Some(ai), Some(bi)) => {
                    let (ai, bi) = (*ai, *bi);
                    // Equal objects agree everywhere.
                    self.eq_ids(ai, bi)
                        || self.agrees.clone().iter().any(|(a2, b2, lo2, hi2)| {
                            let sides = (self.eq_ids(*a2, ai) && self.eq_ids(*b2, bi))
                                || (self.eq_ids(*a2, bi) && self.eq_ids(*b2, ai));
                            sides && self.bound_le_bound(lo2, lo) && self.bound_le_bound(hi, hi2)
                        })
                }
                _ => false,
            },
        };
        if yes {
            Tri::Yes
        } else {
            Tri::Unknown
        }
    }

    /// b1 ≤ b2 entailed?
    fn bound_le_bound(&self, b1: &Bound, b2: &Bound) -> bool {
        if b1.base == b2.base {
            return b1.add <= b2.add;
        }
        match (self.ids.get(&b1.base), self.ids.get(&b2.base)) {
            (Some(x), Some(y)) => {
                // base1 + add1 ≤ base2 + add2 ⟺ base1 − base2 ≤ add2 − add1
                self.dist(*y, *x).is_some_and(|d| d <= b2.add - b1.add)
            }
            _ => false,
        }
    }

    /// Apply width semantics to a raw arithmetic result. Returns the term
    /// the destination should be bound to, asserting wrap facts as needed.
    /// `wrapped` must be a fresh term reserved by the caller; it is used
    /// only when the raw result cannot be proven in range (or folded into
    /// the adjacent wrap window).
    pub fn apply_width_semantics(&mut self, raw: Term, wrapped: Term, ty: IntTy) -> Term {
        let (lo, hi) = (ty.min(), ty.max());
        let in_range = self.entails(&Fact::ge_const(raw, lo)).is_yes() && self.entails(&Fact::le_const(raw, hi)).is_yes();
        if in_range {
            return raw;
        }
        let span = (hi - lo).wrapping_add(1); // 2^bits (0 for 64-bit: treated below)
        if ty.bits < 64 {
            // One window above: raw ∈ [hi+1, hi+span] ⇒ wrapped = raw − span.
            if self.entails(&Fact::ge_const(raw, hi + 1)).is_yes()
                && self.entails(&Fact::le_const(raw, hi + span)).is_yes()
            {
                self.assert_fact(&Fact::diff(wrapped, raw, -span));
                self.assert_fact(&Fact::diff(raw, wrapped, span));
                return wrapped;
            }
            // One window below: raw ∈ [lo−span, lo−1] ⇒ wrapped = raw + span.
            if self.entails(&Fact::le_const(raw, lo - 1)).is_yes()
                && self.entails(&Fact::ge_const(raw, lo - span)).is_yes()
            {
                self.assert_fact(&Fact::diff(wrapped, raw, span));
                self.assert_fact(&Fact::diff(raw, wrapped, -span));
                return wrapped;
            }
        }
        self.assert_fact(&Fact::App { z: wrapped, op: AppOp::Wrap(ty.bits, ty.signed), a: raw, b: Term::Zero });
        self.assert_fact(&Fact::ge_const(wrapped, lo));
        self.assert_fact(&Fact::le_const(wrapped, hi));
        wrapped
    }
}

/// Brute-force model enumeration over a box, used as the test oracle for
/// the difference layer. Only difference/equality/disequality facts are
/// supported (the randomized instances are generated in that fragment).
pub mod brute {
    use super::{Fact, Term};
    use std::collections::BTreeMap;

    fn eval(f: &Fact, v: &BTreeMap<Term, i64>) -> bool {
        let g = |t: &Term| match t {
            Term::Zero => 0,
            Term::Cst(c) => *c,
            _ => v[t],
        };
        match f {
            Fact::Diff { x, y, c } => g(x) - g(y) <= *c,
            Fact::Eq(x, y) => g(x) == g(y),
            Fact::Ne(x, y) => g(x) != g(y),
            _ => panic!("brute oracle supports only difference-fragment facts"),
        }
    }

    fn vars_of(facts: &[Fact], query: &Fact) -> Vec<Term> {
        let mut vs = std::collections::BTreeSet::new();
        let mut add = |t: &Term| {
            if !matches!(t, Term::Zero | Term::Cst(_)) {
                vs.insert(*t);
            }
        };
        for f in facts.iter().chain(std::iter::once(query)) {
            match f {
                Fact::Diff { x, y, .. } | Fact::Eq(x, y) | Fact::Ne(x, y) => {
                    add(x);
                    add(y);
                }
                _ => panic!("brute oracle supports only difference-fragment facts"),
            }
        }
        vs.into_iter().collect()
    }

    /// Is `query` true in every assignment within [lo, hi]^n satisfying
    /// `facts`? DFS with incremental pruning: a partial assignment is
    /// abandoned as soon as any fully-assigned fact is violated.
    pub fn entails_over_box(facts: &[Fact], query: &Fact, lo: i64, hi: i64) -> bool {
        let vars = vars_of(facts, query);
        let mut assign: BTreeMap<Term, i64> = BTreeMap::new();
        fn ready(f: &Fact, assign: &BTreeMap<Term, i64>) -> bool {
            let has = |t: &Term| *t == Term::Zero || assign.contains_key(t);
            match f {
                Fact::Diff { x, y, .. } | Fact::Eq(x, y) | Fact::Ne(x, y) => has(x) && has(y),
                _ => false,
            }
        }
        fn dfs(
            vars: &[Term],
            i: usize,
            facts: &[Fact],
            query: &Fact,
            lo: i64,
            hi: i64,
            assign: &mut BTreeMap<Term, i64>,
        ) -> bool {
            // Returns true if a countermodel exists (facts hold, query fails).
            if i == vars.len() {
                return facts.iter().all(|f| eval(f, assign)) && !eval(query, assign);
            }
            for v in lo..=hi {
                assign.insert(vars[i], v);
                let viable = facts.iter().filter(|f| ready(f, assign)).all(|f| eval(f, assign));
                if viable && dfs(vars, i + 1, facts, query, lo, hi, assign) {
                    assign.remove(&vars[i]);
                    return true;
                }
                assign.remove(&vars[i]);
            }
            false
        }
        !dfs(&vars, 0, facts, query, lo, hi, &mut assign)
    }

    /// Is the fact set satisfiable anywhere in the box?
    pub fn satisfiable_over_box(facts: &[Fact], lo: i64, hi: i64) -> bool {
        // Reuse the countermodel search with an unsatisfiable query:
        // a model of `facts` violating `0 - 0 <= -1` is just a model.
        let never = Fact::Diff { x: Term::Zero, y: Term::Zero, c: -1 };
        !entails_over_box(facts, &never, lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(l: u32) -> Term {
        Term::Var { t: 0, l }
    }

    #[test]
    fn transitive_difference_chains() {
        let mut s = Solver::new();
        s.assert_fact(&Fact::diff(v(0), v(1), 3)); // a - b <= 3
        s.assert_fact(&Fact::diff(v(1), v(2), -2)); // b - c <= -2
        assert!(s.entails(&Fact::diff(v(0), v(2), 1)).is_yes());
        assert!(s.entails(&Fact::diff(v(0), v(2), 2)).is_yes());
        assert_eq!(s.entails(&Fact::diff(v(0), v(2), 0)), Tri::Unknown);
        assert_eq!(s.tightest(v(0), v(2)), Some(1));
    }

    #[test]
    fn negative_cycle_is_inconsistent() {
        let mut s = Solver::new();
        s.assert_fact(&Fact::diff(v(0), v(1), -1));
        s.assert_fact(&Fact::diff(v(1), v(0), 0));
        assert!(!s.consistent());
    }

    #[test]
    fn equality_propagates_into_differences() {
        let mut s = Solver::new();
        s.assert_fact(&Fact::Eq(v(0), v(1)));
        s.assert_fact(&Fact::le_const(v(1), 5));
        assert!(s.entails(&Fact::le_const(v(0), 5)).is_yes());
        assert!(s.entails(&Fact::Eq(v(1), v(0))).is_yes());
    }

    #[test]
    fn strict_bounds_encode_as_c_minus_one() {
        let mut s = Solver::new();
        // x < y  ⟺  x - y <= -1
        s.assert_fact(&Fact::diff(v(0), v(1), -1));
        assert!(s.entails(&Fact::Ne(v(0), v(1))).is_yes());
    }

    #[test]
    fn ne_with_equality_is_inconsistent() {
        let mut s = Solver::new();
        s.assert_fact(&Fact::Ne(v(0), v(1)));
        s.assert_fact(&Fact::Eq(v(0), v(1)));
        assert!(!s.consistent());
    }

    #[test]
    fn app_congruence() {
        let mut s = Solver::new();
        // z1 = sub(a, b), z2 = sub(a2, b2), a=a2, b=b2 ⇒ z1=z2.
        s.assert_fact(&Fact::App { z: v(10), op: AppOp::Sub, a: v(0), b: v(1) });
        s.assert_fact(&Fact::App { z: v(11), op: AppOp::Sub, a: v(2), b: v(3) });
        s.assert_fact(&Fact::Eq(v(0), v(2)));
        s.assert_fact(&Fact::Eq(v(1), v(3)));
        assert!(s.entails(&Fact::Eq(v(10), v(11))).is_yes());
    }

    #[test]
    fn store_congruence_matches_worked_example() {
        // A1 = A2, B1 = store(A1,k,v), B2 = store(A2,k,v) ⇒ B1 = B2.
        let mut s = Solver::new();
        let (a1, a2, b1, b2, k, val) = (v(0), v(1), v(2), v(3), v(4), v(5));
        s.assert_fact(&Fact::Eq(a1, a2));
        s.assert_fact(&Fact::Store { z: b1, obj: a1, idx: k, val });
        s.assert_fact(&Fact::Store { z: b2, obj: a2, idx: k, val });
        assert!(s.entails(&Fact::Eq(b1, b2)).is_yes());
    }

    #[test]
    fn read_over_write_hit_and_miss() {
        let mut s = Solver::new();
        let (a, b, k, k2, val, z) = (v(0), v(1), v(2), v(3), v(4), v(5));
        s.assert_fact(&Fact::Store { z: b, obj: a, idx: k, val });
        // Hit: select(store(A,k,v), k) = v.
        s.assert_fact(&Fact::Select { z, obj: b, idx: k });
        assert!(s.entails(&Fact::Eq(z, val)).is_yes());
        // Miss: k2 ≠ k ⇒ select(store(A,k,v), k2) = select(A, k2).
        let (z2, z3) = (v(6), v(7));
        s.assert_fact(&Fact::Select { z: z2, obj: b, idx: k2 });
        s.assert_fact(&Fact::Select { z: z3, obj: a, idx: k2 });
        s.assert_fact(&Fact::Ne(k2, k));
        assert!(s.entails(&Fact::Eq(z2, z3)).is_yes());
    }

    #[test]
    fn unsigned_wraparound_folds_known_window() {
        let mut s = Solver::new();
        let x = v(0);
        // x = UINT_MAX
        s.assert_fact(&Fact::le_const(x, u32::MAX as i64));
        s.assert_fact(&Fact::ge_const(x, u32::MAX as i64));
        // raw = x + 1
        let raw = v(1);
        s.assert_fact(&Fact::diff(raw, x, 1));
        s.assert_fact(&Fact::diff(x, raw, -1));
        let wrapped = Term::Fresh { t: 0, instr: 0, occ: 0 };
        let out = s.apply_width_semantics(raw, wrapped, IntTy::UINT);
        assert_eq!(out, wrapped);
        assert_eq!(s.const_of(out), Some(0));
    }

    #[test]
    fn signed_range_facts_as_difference_constraints() {
        let mut s = Solver::new();
        let x = v(0);
        s.assert_fact(&Fact::ge_const(x, IntTy::INT.min()));
        s.assert_fact(&Fact::le_const(x, IntTy::INT.max()));
        assert!(s.entails(&Fact::le_const(x, i32::MAX as i64)).is_yes());
        assert_eq!(s.entails(&Fact::le_const(x, 0)), Tri::Unknown);
    }

    #[test]
    fn agree_window_links_selects() {
        let mut s = Solver::new();
        let (a, b, i1, i2, z1, z2, n) = (v(0), v(1), v(2), v(3), v(4), v(5), v(6));
        s.assert_fact(&Fact::Agree { a, b, lo: Bound::konst(1), hi: Bound::of(n, 0) });
        s.assert_fact(&Fact::Select { z: z1, obj: a, idx: i1 });
        s.assert_fact(&Fact::Select { z: z2, obj: b, idx: i2 });
        s.assert_fact(&Fact::Eq(i1, i2));
        s.assert_fact(&Fact::ge_const(i1, 1));
        s.assert_fact(&Fact::diff(i1, n, -1)); // i1 < n
        assert!(s.entails(&Fact::Eq(z1, z2)).is_yes());
    }

    #[test]
    fn agree_survives_paired_and_outside_stores() {
        let mut s = Solver::new();
        let (a, b, n) = (v(0), v(1), v(2));
        let (k, val) = (v(3), v(4));
        let (a2, b2) = (v(5), v(6));
        s.assert_fact(&Fact::Agree { a, b, lo: Bound::konst(1), hi: Bound::of(n, 0) });
        // Paired store at equal index/value.
        s.assert_fact(&Fact::Store { z: a2, obj: a, idx: k, val });
        s.assert_fact(&Fact::Store { z: b2, obj: b, idx: k, val });
        assert!(s
            .entails(&Fact::Agree { a: a2, b: b2, lo: Bound::konst(1), hi: Bound::of(n, 0) })
            .is_yes());
        // One-sided store outside the window (at index 0 < lo).
        let a3 = v(7);
        s.assert_fact(&Fact::Store { z: a3, obj: a2, idx: Term::Zero, val: v(8) });
        assert!(s
            .entails(&Fact::Agree { a: a3, b: b2, lo: Bound::konst(1), hi: Bound::of(n, 0) })
            .is_yes());
    }

    #[test]
    fn brute_oracle_agrees_on_small_instance() {
        let facts = vec![Fact::diff(v(0), v(1), 3), Fact::diff(v(1), v(2), -2)];
        let q = Fact::diff(v(0), v(2), 1);
        assert!(brute::entails_over_box(&facts, &q, -8, 8));
        let q2 = Fact::diff(v(0), v(2), -1);
        assert!(!brute::entails_over_box(&facts, &q2, -8, 8));
    }
}
