//! Linear temporal logic over lasso words and policy synthesis for the
//! discrete layer by accepting-lasso search in an FSM × Büchi product.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gts::Gts;

/// Core syntax; derived operators are expanded by their constructors.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Ltl {
    True,
    Atom(String),
    Not(Box<Ltl>),
    And(Box<Ltl>, Box<Ltl>),
    Next(Box<Ltl>),
    Until(Box<Ltl>, Box<Ltl>),
}

impl Ltl {
    pub fn atom(p: impl Into<String>) -> Self {
        Ltl::Atom(p.into())
    }

    pub fn not(a: Ltl) -> Self {
        Ltl::Not(Box::new(a))
    }

    pub fn and(a: Ltl, b: Ltl) -> Self {
        Ltl::And(Box::new(a), Box::new(b))
    }

    pub fn next(a: Ltl) -> Self {
        Ltl::Next(Box::new(a))
    }

    pub fn until(a: Ltl, b: Ltl) -> Self {
        Ltl::Until(Box::new(a), Box::new(b))
    }

    pub fn falsum() -> Self {
        Ltl::not(Ltl::True)
    }

    pub fn or(a: Ltl, b: Ltl) -> Self {
        Ltl::not(Ltl::and(Ltl::not(a), Ltl::not(b)))
    }

    pub fn implies(a: Ltl, b: Ltl) -> Self {
        Ltl::not(Ltl::and(a, Ltl::not(b)))
    }

    pub fn eventually(a: Ltl) -> Self {
        Ltl::until(Ltl::True, a)
    }

    pub fn always(a: Ltl) -> Self {
        Ltl::not(Ltl::eventually(Ltl::not(a)))
    }

    pub fn atoms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<String>) {
        match self {
            Ltl::True => {}
            Ltl::Atom(p) => {
                out.insert(p.clone());
            }
            Ltl::Not(a) | Ltl::Next(a) => a.collect_atoms(out),
            Ltl::And(a, b) | Ltl::Until(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Ltl::True | Ltl::Atom(_) => 0,
            Ltl::Not(a) | Ltl::Next(a) => 1 + a.depth(),
            Ltl::And(a, b) | Ltl::Until(a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// Truth of a temporal-operator-free formula on a single letter.
    pub fn eval_letter(&self, letter: &BTreeSet<String>) -> Result<bool> {
        Ok(match self {
            Ltl::True => true,
            Ltl::Atom(p) => letter.contains(p),
            Ltl::Not(a) => !a.eval_letter(letter)?,
            Ltl::And(a, b) => a.eval_letter(letter)? && b.eval_letter(letter)?,
            Ltl::Next(_) | Ltl::Until(..) => {
                return Err(Error::Domain(format!("guard `{self}` uses a temporal operator")))
            }
        })
    }
}

impl fmt::Display for Ltl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ltl::True => write!(f, "true"),
            Ltl::Atom(p) => write!(f, "{p}"),
            Ltl::Not(a) => write!(f, "!({a})"),
            Ltl::And(a, b) => write!(f, "({a} & {b})"),
            Ltl::Next(a) => write!(f, "X({a})"),
            Ltl::Until(a, b) => write!(f, "({a} U {b})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Not,
    And,
    Or,
    Implies,
    LParen,
    RParen,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let tok = match c {
            '!' | '~' => Tok::Not,
            '&' => {
                if chars.get(i + 1) == Some(&'&') {
                    i += 1;
                }
                Tok::And
            }
            '|' => {
                if chars.get(i + 1) == Some(&'|') {
                    i += 1;
                }
                Tok::Or
            }
            '-' if chars.get(i + 1) == Some(&'>') => {
                i += 1;
                Tok::Implies
            }
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i + 1 < chars.len() && (chars[i + 1].is_ascii_alphanumeric() || chars[i + 1] == '_') {
                    i += 1;
                }
                Tok::Ident(chars[start..=i].iter().collect())
            }
            other => return Err(Error::Syntax { pos: start, msg: format!("unexpected character `{other}`") }),
        };
        out.push((start, tok));
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn is_ident(&self, name: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == name)
    }

    fn implication(&mut self) -> Result<Ltl> {
        let lhs = self.disjunction()?;
        if self.peek() == Some(&Tok::Implies) {
            self.at += 1;
            let rhs = self.implication()?;
            return Ok(Ltl::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Ltl> {
        let mut lhs = self.conjunction()?;
        while self.peek() == Some(&Tok::Or) {
            self.at += 1;
            lhs = Ltl::or(lhs, self.conjunction()?);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Ltl> {
        let mut lhs = self.until()?;
        while self.peek() == Some(&Tok::And) {
            self.at += 1;
            lhs = Ltl::and(lhs, self.until()?);
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<Ltl> {
        let lhs = self.unary()?;
        if self.is_ident("U") {
            self.at += 1;
            let rhs = self.until()?;
            return Ok(Ltl::until(lhs, rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Ltl> {
        let pos = self.pos();
        let tok = self.peek().cloned().ok_or(Error::Syntax { pos, msg: "unexpected end of formula".into() })?;
        self.at += 1;
        match tok {
            Tok::Not => Ok(Ltl::not(self.unary()?)),
            Tok::LParen => {
                let inner = self.implication()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(Error::Syntax { pos: self.pos(), msg: "expected `)`".into() });
                }
                self.at += 1;
                Ok(inner)
            }
            Tok::Ident(name) => match name.as_str() {
                "X" => Ok(Ltl::next(self.unary()?)),
                "F" => Ok(Ltl::eventually(self.unary()?)),
                "G" => Ok(Ltl::always(self.unary()?)),
                "true" => Ok(Ltl::True),
                "false" => Ok(Ltl::falsum()),
                "U" => Err(Error::Syntax { pos, msg: "`U` needs a left operand".into() }),
                _ => Ok(Ltl::Atom(name)),
            },
            other => Err(Error::Syntax { pos, msg: format!("unexpected token {other:?}") }),
        }
    }
}

/// Precedence from tightest: `! X F G`, then right-associative `U`, then
/// `&`, `|` and right-associative `->`. `X`, `F`, `G`, `U`, `true` and
/// `false` are reserved words.
pub fn parse_ltl(text: &str) -> Result<Ltl> {
    let toks = lex(text)?;
    let mut p = Parser { toks, at: 0, end: text.chars().count() };
    let f = p.implication()?;
    if p.at != p.toks.len() {
        return Err(Error::Syntax { pos: p.pos(), msg: "trailing input".into() });
    }
    Ok(f)
}

pub type Letter = BTreeSet<String>;

/// `prefix · loop^ω`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LassoWord {
    pub prefix: Vec<Letter>,
    pub cycle: Vec<Letter>,
}

impl LassoWord {
    pub fn new(prefix: Vec<Letter>, cycle: Vec<Letter>) -> Result<Self> {
        if cycle.is_empty() {
            return Err(Error::Domain("lasso loop must be nonempty".into()));
        }
        Ok(Self { prefix, cycle })
    }

    pub fn letter(&self, i: usize) -> &Letter {
        if i < self.prefix.len() {
            &self.prefix[i]
        } else {
            &self.cycle[(i - self.prefix.len()) % self.cycle.len()]
        }
    }
}

/// Exact satisfaction on `prefix · loop^ω`: each subformula is tabulated on
/// the finitely many distinct suffixes; until is a least fixpoint.
pub fn eval_lasso(phi: &Ltl, w: &LassoWord) -> bool {
    let n = w.prefix.len() + w.cycle.len();
    let succ = |i: usize| if i + 1 < n { i + 1 } else { w.prefix.len() };
    fn table(phi: &Ltl, w: &LassoWord, n: usize, succ: &dyn Fn(usize) -> usize) -> Vec<bool> {
        match phi {
            Ltl::True => vec![true; n],
            Ltl::Atom(p) => (0..n).map(|i| w.letter(i).contains(p)).collect(),
            Ltl::Not(a) => table(a, w, n, succ).into_iter().map(|v| !v).collect(),
            Ltl::And(a, b) => {
                let (ta, tb) = (table(a, w, n, succ), table(b, w, n, succ));
                ta.iter().zip(&tb).map(|(x, y)| *x && *y).collect()
            }
            Ltl::Next(a) => {
                let ta = table(a, w, n, succ);
                (0..n).map(|i| ta[succ(i)]).collect()
            }
            Ltl::Until(a, b) => {
                let (ta, tb) = (table(a, w, n, succ), table(b, w, n, succ));
                let mut r = tb.clone();
                loop {
                    let mut changed = false;
                    for i in (0..n).rev() {
                        if !r[i] && ta[i] && r[succ(i)] {
                            r[i] = true;
                            changed = true;
                        }
                    }
                    if !changed {
                        return r;
                    }
                }
            }
        }
    }
    table(phi, w, n, &succ)[0]
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuchiEdge {
    pub from: String,
    /// Propositional formula over the letter.
    pub guard: String,
    pub to: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuchiSpec {
    pub states: Vec<String>,
    pub initial: String,
    pub accepting: Vec<String>,
    pub transitions: Vec<BuchiEdge>,
}

#[derive(Clone, Debug)]
pub struct BuchiAutomaton {
    pub states: Vec<String>,
    pub initial: usize,
    pub accepting: BTreeSet<usize>,
    pub edges: Vec<(usize, Ltl, usize)>,
}

impl BuchiAutomaton {
    pub fn from_spec(spec: &BuchiSpec) -> Result<Self> {
        let idx = |s: &str| {
            spec.states
                .iter()
                .position(|x| x == s)
                .ok_or_else(|| Error::Validation(format!("Büchi automaton: unknown state {s}")))
        };
        let mut edges = Vec::with_capacity(spec.transitions.len());
        for t in &spec.transitions {
            let guard = parse_ltl(&t.guard)?;
            guard.eval_letter(&BTreeSet::new())?;
            edges.push((idx(&t.from)?, guard, idx(&t.to)?));
        }
        Ok(Self {
            states: spec.states.clone(),
            initial: idx(&spec.initial)?,
            accepting: spec.accepting.iter().map(|s| idx(s)).collect::<Result<_>>()?,
            edges,
        })
    }

    /// Successors after reading `letter` from `q`.
    pub fn step(&self, q: usize, letter: &Letter) -> BTreeSet<usize> {
        self.edges
            .iter()
            .filter(|(f, g, _)| *f == q && g.eval_letter(letter).unwrap_or(false))
            .map(|(_, _, t)| *t)
            .collect()
    }

    /// Every letter over `aps` must have a successor from every state.
    pub fn check_total(&self, letters: &[Letter]) -> Result<()> {
        for q in 0..self.states.len() {
            for l in letters {
                if self.step(q, l).is_empty() {
                    return Err(Error::Validation(format!(
                        "Büchi state {} has no move on letter {l:?}",
                        self.states[q]
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub cell: String,
    pub buchi: String,
}

/// Cell schedule `prefix · cycle^ω`; consecutive cells are distinct FSM moves.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LassoPlan {
    pub prefix: Vec<PlanStep>,
    pub cycle: Vec<PlanStep>,
}

impl LassoPlan {
    pub fn cell(&self, i: usize) -> &str {
        if i < self.prefix.len() {
            &self.prefix[i].cell
        } else {
            &self.cycle[(i - self.prefix.len()) % self.cycle.len()].cell
        }
    }

    /// Command issued at plan position `i`: move from cell `i` to cell `i+1`.
    pub fn command(&self, i: usize) -> (String, String) {
        (self.cell(i).to_string(), self.cell(i + 1).to_string())
    }

    pub fn cells(&self) -> (Vec<String>, Vec<String>) {
        (
            self.prefix.iter().map(|s| s.cell.clone()).collect(),
            self.cycle.iter().map(|s| s.cell.clone()).collect(),
        )
    }

    pub fn word(&self, labels: &BTreeMap<String, Letter>) -> LassoWord {
        let lab = |s: &PlanStep| labels.get(&s.cell).cloned().unwrap_or_default();
        LassoWord { prefix: self.prefix.iter().map(lab).collect(), cycle: self.cycle.iter().map(lab).collect() }
    }
}

type ProductState = (usize, usize, Option<usize>);

fn bfs_path(
    start: &[ProductState],
    succ: &dyn Fn(&ProductState) -> Vec<ProductState>,
    goal: &dyn Fn(&ProductState) -> bool,
) -> Option<Vec<ProductState>> {
    let mut parent: BTreeMap<ProductState, Option<ProductState>> = BTreeMap::new();
    let mut queue = VecDeque::new();
    for s in start {
        if parent.insert(*s, None).is_none() {
            queue.push_back(*s);
        }
    }
    while let Some(s) = queue.pop_front() {
        if goal(&s) {
            let mut path = vec![s];
            let mut cur = s;
            while let Some(Some(p)) = parent.get(&cur) {
                path.push(*p);
                cur = *p;
            }
            path.reverse();
            return Some(path);
        }
        for t in succ(&s) {
            if let std::collections::btree_map::Entry::Vacant(e) = parent.entry(t) {
                e.insert(Some(s));
                queue.push_back(t);
            }
        }
    }
    None
}

/// Accepting lasso in `fsm × buchi`, preferring plans that never return
/// immediately to the cell just left; falls back to unrestricted search.
pub fn synthesize_policy(fsm: &Gts, buchi: &BuchiAutomaton, labels: &BTreeMap<String, Letter>) -> Result<LassoPlan> {
    if fsm.initial.len() != 1 {
        return Err(Error::Synthesis(format!("expected one initial cell, found {}", fsm.initial.len())));
    }
    let label = |c: usize| labels.get(&fsm.states[c]).cloned().unwrap_or_default();
    let moves: Vec<BTreeSet<usize>> = (0..fsm.states.len())
        .map(|c| fsm.edges_from(c).map(|e| e.to).filter(|&d| d != c).collect())
        .collect();
    let c0 = fsm.initial[0];
    let starts: Vec<ProductState> = buchi.step(buchi.initial, &label(c0)).into_iter().map(|q| (c0, q, None)).collect();
    for no_u_turn in [true, false] {
        let succ = |s: &ProductState| -> Vec<ProductState> {
            let (c, q, prev) = *s;
            let mut out = Vec::new();
            for &d in &moves[c] {
                if no_u_turn && Some(d) == prev {
                    continue;
                }
                for q2 in buchi.step(q, &label(d)) {
                    out.push((d, q2, if no_u_turn { Some(c) } else { None }));
                }
            }
            out
        };
        // all reachable accepting states, nearest first
        let mut reach: Vec<ProductState> = Vec::new();
        let mut seen: BTreeSet<ProductState> = starts.iter().copied().collect();
        let mut queue: VecDeque<ProductState> = starts.iter().copied().collect();
        while let Some(s) = queue.pop_front() {
            reach.push(s);
            for t in succ(&s) {
                if seen.insert(t) {
                    queue.push_back(t);
                }
            }
        }
        let mut best: Option<(usize, Vec<ProductState>, Vec<ProductState>)> = None;
        for acc in reach.iter().filter(|s| buchi.accepting.contains(&s.1)) {
            let Some(stem) = bfs_path(&starts, &succ, &|s| s == acc) else { continue };
            let Some(back) = bfs_path(&succ(acc), &succ, &|s| s == acc) else { continue };
            let cost = stem.len() + back.len();
            if best.as_ref().is_none_or(|(c, _, _)| cost < *c) {
                best = Some((cost, stem, back));
            }
        }
        if let Some((_, stem, back)) = best {
            // stem ends at acc; back runs from a successor of acc to acc
            let step = |s: &ProductState| PlanStep { cell: fsm.states[s.0].clone(), buchi: buchi.states[s.1].clone() };
            let mut prefix: Vec<PlanStep> = stem[..stem.len() - 1].iter().map(step).collect();
            let mut cycle: Vec<PlanStep> = std::iter::once(&stem[stem.len() - 1]).chain(&back[..back.len() - 1]).map(step).collect();
            while prefix.last().is_some_and(|p| Some(p) == cycle.last()) {
                prefix.pop();
                cycle.rotate_right(1);
            }
            return Ok(LassoPlan { prefix, cycle });
        }
    }
    Err(Error::Synthesis("no accepting cycle is reachable in the FSM × Büchi product".into()))
}
