//! Bayesian networks in BIF and their translation to programs.
//!
//! Supported: `network`, `variable` blocks with a discrete domain, and
//! `probability` blocks using either a `table` or one line per parent
//! assignment. Properties are skipped. In a conditional `table` the child
//! value varies slowest and the last parent fastest.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use crate::ast::{self, Expr};
use crate::parse::{is_identifier, Pos, KEYWORDS};
use crate::prob::Prob;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub states: Vec<String>,
}

/// Conditional distribution of one variable. Rows are indexed by parent
/// assignments in row-major order (last parent fastest).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cpt {
    pub parents: Vec<usize>,
    pub rows: Vec<Vec<Prob>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BifNetwork {
    pub name: Option<String>,
    pub variables: Vec<Variable>,
    /// Indexed like `variables`.
    pub cpts: Vec<Cpt>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BifError {
    #[error("{pos}: {msg}")]
    Syntax { pos: DisplayPos, msg: String },
    #[error("{pos}: undeclared variable `{name}`")]
    Undeclared { pos: DisplayPos, name: String },
    #[error("{pos}: variable `{name}` declared twice")]
    Duplicate { pos: DisplayPos, name: String },
    #[error("no probability block for `{0}`")]
    MissingCpt(String),
    #[error("`{var}`: {msg}")]
    Table { var: String, msg: String },
    #[error("`{var}` row ({row}) sums to {sum}, expected 1")]
    RowSum { var: String, row: String, sum: Prob },
    #[error("cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("network has no variables")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DisplayPos(pub Pos);

impl fmt::Display for DisplayPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.0.line, self.0.col)
    }
}

#[derive(Debug, Clone, Default)]
pub struct BifOptions {
    /// Rescale rows whose sum is within this distance of 1 instead of
    /// rejecting them. Useful for files written with rounded decimals.
    pub renormalize_within: Option<Prob>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    Punct(char),
}

const PUNCT: &[char] = &['{', '}', '(', ')', '[', ']', ';', ',', '|'];

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, BifError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let step = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c.is_whitespace() {
            step(&mut i, &mut line, &mut col, c);
        } else if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                {
                    let ch = chars[i];
                    step(&mut i, &mut line, &mut col, ch);
                }
            }
        } else if c == '/' && chars.get(i + 1) == Some(&'*') {
            step(&mut i, &mut line, &mut col, '/');
            step(&mut i, &mut line, &mut col, '*');
            loop {
                if i >= chars.len() {
                    return Err(syntax(pos, "unterminated comment"));
                }
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    step(&mut i, &mut line, &mut col, '*');
                    step(&mut i, &mut line, &mut col, '/');
                    break;
                }
                {
                    let ch = chars[i];
                    step(&mut i, &mut line, &mut col, ch);
                }
            }
        } else if c == '"' {
            step(&mut i, &mut line, &mut col, c);
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None => return Err(syntax(pos, "unterminated string")),
                    Some('"') => {
                        step(&mut i, &mut line, &mut col, '"');
                        break;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        step(&mut i, &mut line, &mut col, ch);
                    }
                }
            }
            out.push((Tok::Word(s), pos));
        } else if PUNCT.contains(&c) {
            out.push((Tok::Punct(c), pos));
            step(&mut i, &mut line, &mut col, c);
        } else {
            let mut s = String::new();
            while i < chars.len()
                && !chars[i].is_whitespace()
                && !PUNCT.contains(&chars[i])
                && chars[i] != '"'
            {
                s.push(chars[i]);
                {
                    let ch = chars[i];
                    step(&mut i, &mut line, &mut col, ch);
                }
            }
            out.push((Tok::Word(s), pos));
        }
    }
    Ok(out)
}

fn syntax(pos: Pos, msg: impl Into<String>) -> BifError {
    BifError::Syntax {
        pos: DisplayPos(pos),
        msg: msg.into(),
    }
}

struct RawCpt {
    child: (String, Pos),
    parents: Vec<(String, Pos)>,
    table: Option<(Vec<Prob>, Pos)>,
    rows: Vec<(Vec<String>, Vec<Prob>, Pos)>,
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    i: usize,
    end: Pos,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|(t, _)| t)
    }

    fn pos(&self) -> Pos {
        self.toks.get(self.i).map(|(_, p)| *p).unwrap_or(self.end)
    }

    fn next(&mut self) -> Result<(Tok, Pos), BifError> {
        let t = self
            .toks
            .get(self.i)
            .cloned()
            .ok_or_else(|| syntax(self.end, "unexpected end of input"))?;
        self.i += 1;
        Ok(t)
    }

    fn punct(&mut self, c: char) -> Result<(), BifError> {
        match self.next()? {
            (Tok::Punct(d), _) if d == c => Ok(()),
            (t, pos) => Err(syntax(pos, format!("expected `{}`, found {}", c, show(&t)))),
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn word(&mut self) -> Result<(String, Pos), BifError> {
        match self.next()? {
            (Tok::Word(w), pos) => Ok((w, pos)),
            (t, pos) => Err(syntax(pos, format!("expected a name, found {}", show(&t)))),
        }
    }

    /// Skip up to and including the next `;` at this nesting level.
    fn skip_statement(&mut self) -> Result<(), BifError> {
        loop {
            match self.next()? {
                (Tok::Punct(';'), _) => return Ok(()),
                (Tok::Punct('}'), pos) => return Err(syntax(pos, "expected `;`")),
                _ => {}
            }
        }
    }

    fn skip_block(&mut self) -> Result<(), BifError> {
        self.punct('{')?;
        let mut depth = 1;
        while depth > 0 {
            match self.next()? {
                (Tok::Punct('{'), _) => depth += 1,
                (Tok::Punct('}'), _) => depth -= 1,
                _ => {}
            }
        }
        Ok(())
    }

    /// Numbers up to `;`, separated by commas or whitespace.
    fn numbers(&mut self) -> Result<Vec<Prob>, BifError> {
        let mut out = Vec::new();
        loop {
            match self.next()? {
                (Tok::Punct(';'), _) => return Ok(out),
                (Tok::Punct(','), _) => {}
                (Tok::Word(w), pos) => {
                    let p = Prob::parse_decimal(&w)
                        .map_err(|_| syntax(pos, format!("`{}` is not a number", w)))?;
                    if !p.is_probability() {
                        return Err(syntax(pos, format!("`{}` is not a probability", w)));
                    }
                    out.push(p);
                }
                (t, pos) => return Err(syntax(pos, format!("expected a number, found {}", show(&t)))),
            }
        }
    }

    /// Names up to the closing delimiter, separated by commas.
    fn names_until(&mut self, close: char) -> Result<Vec<(String, Pos)>, BifError> {
        let mut out = Vec::new();
        loop {
            if self.eat(close) {
                return Ok(out);
            }
            if !out.is_empty() {
                self.eat(',');
                if self.eat(close) {
                    return Ok(out);
                }
            }
            out.push(self.word()?);
        }
    }

    fn variable(&mut self) -> Result<(String, Pos, Vec<String>), BifError> {
        let (name, pos) = self.word()?;
        self.punct('{')?;
        let mut states = None;
        while !self.eat('}') {
            let (w, wpos) = self.word()?;
            match w.as_str() {
                "type" => {
                    let (kind, kpos) = self.word()?;
                    if kind != "discrete" {
                        return Err(syntax(kpos, format!("unsupported variable type `{}`", kind)));
                    }
                    self.punct('[')?;
                    let (n, npos) = self.word()?;
                    let n: usize = n.parse().map_err(|_| syntax(npos, "expected a state count"))?;
                    self.punct(']')?;
                    self.punct('{')?;
                    let labels: Vec<String> = self.names_until('}')?.into_iter().map(|(s, _)| s).collect();
                    self.punct(';')?;
                    if labels.len() != n || n == 0 {
                        return Err(syntax(
                            npos,
                            format!("`{}` declares {} states but lists {}", name, n, labels.len()),
                        ));
                    }
                    states = Some(labels);
                }
                "property" => self.skip_statement()?,
                other => return Err(syntax(wpos, format!("unexpected `{}` in variable block", other))),
            }
        }
        let states = states.ok_or_else(|| syntax(pos, format!("`{}` has no type", name)))?;
        Ok((name, pos, states))
    }

    fn probability(&mut self) -> Result<RawCpt, BifError> {
        self.punct('(')?;
        let child = self.word()?;
        let mut parents = Vec::new();
        if self.eat('|') {
            parents = self.names_until(')')?;
        } else {
            self.punct(')')?;
        }
        self.punct('{')?;
        let mut raw = RawCpt {
            child,
            parents,
            table: None,
            rows: Vec::new(),
        };
        while !self.eat('}') {
            let pos = self.pos();
            if self.eat('(') {
                let labels = self.names_until(')')?.into_iter().map(|(s, _)| s).collect();
                raw.rows.push((labels, self.numbers()?, pos));
                continue;
            }
            let (w, wpos) = self.word()?;
            match w.as_str() {
                "table" | "default" => raw.table = Some((self.numbers()?, wpos)),
                "property" => self.skip_statement()?,
                other => {
                    return Err(syntax(
                        wpos,
                        format!("unexpected `{}` in probability block", other),
                    ))
                }
            }
        }
        Ok(raw)
    }
}

fn show(t: &Tok) -> String {
    match t {
        Tok::Word(w) => format!("`{}`", w),
        Tok::Punct(c) => format!("`{}`", c),
    }
}

pub fn parse_bif(text: &str) -> Result<BifNetwork, BifError> {
    parse_bif_with(text, &BifOptions::default())
}

pub fn parse_bif_with(text: &str, opts: &BifOptions) -> Result<BifNetwork, BifError> {
    let toks = lex(text)?;
    let end = {
        let lines: Vec<&str> = text.split('\n').collect();
        Pos {
            line: lines.len(),
            col: lines.last().map_or(0, |l| l.chars().count()) + 1,
        }
    };
    let mut ps = Parser { toks, i: 0, end };
    let mut name = None;
    let mut variables: Vec<Variable> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut raws = Vec::new();
    while ps.peek().is_some() {
        let (w, pos) = ps.word()?;
        match w.as_str() {
            "network" => {
                if ps.peek() != Some(&Tok::Punct('{')) {
                    name = Some(ps.word()?.0);
                }
                ps.skip_block()?;
            }
            "variable" => {
                let (v, vpos, states) = ps.variable()?;
                if index.contains_key(&v) {
                    return Err(BifError::Duplicate {
                        pos: DisplayPos(vpos),
                        name: v,
                    });
                }
                index.insert(v.clone(), variables.len());
                variables.push(Variable { name: v, states });
            }
            "probability" => raws.push(ps.probability()?),
            other => return Err(syntax(pos, format!("unexpected `{}`", other))),
        }
    }
    if variables.is_empty() {
        return Err(BifError::Empty);
    }

    let lookup = |(n, pos): &(String, Pos)| {
        index.get(n).copied().ok_or_else(|| BifError::Undeclared {
            pos: DisplayPos(*pos),
            name: n.clone(),
        })
    };
    let mut cpts: Vec<Option<Cpt>> = vec![None; variables.len()];
    for raw in raws {
        let child = lookup(&raw.child)?;
        let parents = raw.parents.iter().map(&lookup).collect::<Result<Vec<_>, _>>()?;
        let var = &variables[child];
        if cpts[child].is_some() {
            return Err(table_err(var, "more than one probability block"));
        }
        let cards: Vec<usize> = parents.iter().map(|&p| variables[p].states.len()).collect();
        let n_rows: usize = cards.iter().product();
        let k = var.states.len();
        let mut rows: Vec<Option<Vec<Prob>>> = vec![None; n_rows];
        if let Some((table, _)) = raw.table {
            if table.len() != k * n_rows {
                return Err(table_err(
                    var,
                    format!("table has {} entries, expected {}", table.len(), k * n_rows),
                ));
            }
            for (r, row) in rows.iter_mut().enumerate() {
                *row = Some((0..k).map(|s| table[s * n_rows + r].clone()).collect());
            }
        }
        for (labels, probs, pos) in raw.rows {
            if labels.len() != parents.len() {
                return Err(syntax(
                    pos,
                    format!("row for `{}` names {} parent values", var.name, labels.len()),
                ));
            }
            let mut r = 0;
            for (label, &p) in labels.iter().zip(&parents) {
                let states = &variables[p].states;
                let s = states.iter().position(|x| x == label).ok_or_else(|| {
                    syntax(
                        pos,
                        format!("`{}` is not a state of `{}`", label, variables[p].name),
                    )
                })?;
                r = r * states.len() + s;
            }
            if probs.len() != k {
                return Err(syntax(
                    pos,
                    format!("row has {} entries, expected {}", probs.len(), k),
                ));
            }
            rows[r] = Some(probs);
        }
        let mut done = Vec::with_capacity(n_rows);
        for (r, row) in rows.into_iter().enumerate() {
            let row = row.ok_or_else(|| {
                table_err(
                    var,
                    format!(
                        "no entry for parent values ({})",
                        row_label(&variables, &parents, r)
                    ),
                )
            })?;
            done.push(check_row(var, row, opts, || row_label(&variables, &parents, r))?);
        }
        cpts[child] = Some(Cpt { parents, rows: done });
    }
    let cpts = cpts
        .into_iter()
        .zip(&variables)
        .map(|(c, v)| c.ok_or_else(|| BifError::MissingCpt(v.name.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let net = BifNetwork {
        name,
        variables,
        cpts,
    };
    topological_order(&net)?;
    Ok(net)
}

fn table_err(var: &Variable, msg: impl Into<String>) -> BifError {
    BifError::Table {
        var: var.name.clone(),
        msg: msg.into(),
    }
}

fn check_row(
    var: &Variable,
    row: Vec<Prob>,
    opts: &BifOptions,
    label: impl Fn() -> String,
) -> Result<Vec<Prob>, BifError> {
    let sum: Prob = row.iter().sum();
    if sum.is_one() {
        return Ok(row);
    }
    if let Some(tol) = &opts.renormalize_within {
        let gap = if sum > Prob::one() {
            &sum - &Prob::one()
        } else {
            sum.complement()
        };
        if !sum.is_zero() && gap <= *tol {
            return Ok(row.iter().map(|p| p / &sum).collect());
        }
    }
    Err(BifError::RowSum {
        var: var.name.clone(),
        row: label(),
        sum,
    })
}

/// Parent assignment of row `r`, as state labels.
fn row_label(vars: &[Variable], parents: &[usize], r: usize) -> String {
    row_states(vars, parents, r)
        .iter()
        .zip(parents)
        .map(|(&s, &p)| vars[p].states[s].clone())
        .collect::<Vec<_>>()
        .join(", ")
}

/// State index of each parent in row `r` (row-major, last parent fastest).
pub fn row_states(vars: &[Variable], parents: &[usize], mut r: usize) -> Vec<usize> {
    let mut out = vec![0; parents.len()];
    for (slot, &p) in out.iter_mut().zip(parents).rev() {
        let k = vars[p].states.len();
        *slot = r % k;
        r /= k;
    }
    out
}

/// Variables with parents first, ties broken by declaration order.
pub fn topological_order(n: &BifNetwork) -> Result<Vec<usize>, BifError> {
    let count = n.variables.len();
    let mut indegree: Vec<usize> = n.cpts.iter().map(|c| c.parents.len()).collect();
    let mut children = vec![Vec::new(); count];
    for (v, c) in n.cpts.iter().enumerate() {
        for &p in &c.parents {
            children[p].push(v);
        }
    }
    let mut ready: BTreeSet<usize> = (0..count).filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(count);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() == count {
        return Ok(order);
    }
    // Every remaining variable has a remaining parent; walk parents until one
    // repeats.
    let placed: HashSet<usize> = order.into_iter().collect();
    let mut v = (0..count)
        .find(|v| !placed.contains(v))
        .expect("unplaced variable");
    let mut seen = vec![v];
    loop {
        v = *n.cpts[v]
            .parents
            .iter()
            .find(|p| !placed.contains(p))
            .expect("remaining parent");
        if let Some(i) = seen.iter().position(|&s| s == v) {
            let mut cycle: Vec<String> = seen[i..]
                .iter()
                .rev()
                .map(|&s| n.variables[s].name.clone())
                .collect();
            cycle.push(cycle[0].clone());
            return Err(BifError::Cycle(cycle));
        }
        seen.push(v);
    }
}

/// Program identifiers for the variables, unique and valid.
pub fn program_names(n: &BifNetwork) -> Vec<String> {
    let mut used = HashSet::new();
    n.variables
        .iter()
        .map(|v| {
            let mut base: String = v
                .name
                .chars()
                .map(|c| {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        c
                    } else {
                        '_'
                    }
                })
                .collect();
            if !base.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_') {
                base.insert_str(0, "v_");
            }
            if KEYWORDS.contains(&base.as_str()) {
                base.push('_');
            }
            let mut name = base.clone();
            let mut k = 2;
            while !used.insert(name.clone()) {
                name = format!("{}_{}", base, k);
                k += 1;
            }
            debug_assert!(is_identifier(&name));
            name
        })
        .collect()
}

fn dist(row: &[Prob]) -> Expr {
    if row.len() == 2 {
        ast::flip(row[0].clone())
    } else {
        Expr::Discrete(row.to_vec())
    }
}

/// The network as a program: one `let` per variable in topological order,
/// each conditional table as a chain over parent values, returning the tuple
/// of all variables. A binary variable is a `flip` that is true for its first
/// state.
pub fn emit_program(n: &BifNetwork) -> Expr {
    let order = topological_order(n).expect("validated network");
    let names = program_names(n);
    let mut body = ast::tuple_of(order.iter().map(|&v| ast::var(names[v].clone())).collect());
    for &v in order.iter().rev() {
        let cpt = &n.cpts[v];
        let mut chain = dist(cpt.rows.last().expect("at least one row"));
        for r in (0..cpt.rows.len() - 1).rev() {
            let guard = ast::conjunction(
                row_states(&n.variables, &cpt.parents, r)
                    .into_iter()
                    .zip(&cpt.parents)
                    .map(|(s, &p)| Expr::IntEq(names[p].clone(), s as u64))
                    .collect(),
            );
            chain = ast::ite(guard, dist(&cpt.rows[r]), chain);
        }
        body = ast::let_(names[v].clone(), chain, body);
    }
    let mut p = body;
    ast::renumber_flips(&mut p);
    p
}
