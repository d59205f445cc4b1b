//! CPLEX-LP text format: writer and a parser for the subset the writer emits
//! (plus the common spellings other tools produce).
//!
//! Every variable is listed in `Bounds` in model order, which the parser uses
//! to restore the original variable order, so `parse_lp(write_lp(m))` gives
//! back `m`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use crate::model::{Expr, MipModel, ObjectiveSense, Sense, VarId, VarKind, Variable};
use crate::MipError;

const WRAP_AT: usize = 200;
const KEYWORDS: &[&str] = &[
    "max", "maximize", "maximum", "min", "minimize", "minimum", "st", "subject", "such", "bounds", "bound", "binary",
    "binaries", "bin", "general", "generals", "gen", "integer", "integers", "end", "free", "inf", "infinity",
];

/// Formats a number so that it parses back to the same `f64`.
pub fn format_number(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == v.trunc() && v.abs() < 1e15 {
        return format!("{}", v as i64);
    }
    let a = v.abs();
    if (1e-5..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Maps a name onto the characters `[A-Za-z0-9_]`, prefixing names that would
/// read as numbers or keywords.
pub fn escape_name(name: &str) -> String {
    let mut out: String =
        name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
    let starts_badly = out.chars().next().is_none_or(|c| c.is_ascii_digit());
    if starts_badly || KEYWORDS.contains(&out.to_ascii_lowercase().as_str()) {
        out.insert_str(0, "v_");
    }
    out
}

fn escaped_names<'a>(names: impl Iterator<Item = &'a str>, what: &str) -> Result<Vec<String>, MipError> {
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for name in names {
        let esc = escape_name(name);
        if let Some(prev) = seen.insert(esc.clone(), name) {
            if prev != name || what == "variable" {
                return Err(MipError::NameCollision(format!("{what} names {prev:?} and {name:?} both map to {esc}")));
            }
        }
        out.push(esc);
    }
    Ok(out)
}

struct LineWriter {
    out: String,
    line_len: usize,
}

impl LineWriter {
    fn push(&mut self, piece: &str) {
        if self.line_len + piece.len() > WRAP_AT && self.line_len > 0 {
            self.out.push_str("\n   ");
            self.line_len = 3;
        }
        self.out.push_str(piece);
        self.line_len += piece.len();
    }

    fn newline(&mut self) {
        self.out.push('\n');
        self.line_len = 0;
    }
}

fn write_terms(w: &mut LineWriter, terms: &[(VarId, f64)], names: &[String]) {
    for (i, &(v, c)) in terms.iter().enumerate() {
        let sign = if c < 0.0 { "-" } else { "+" };
        let mag = c.abs();
        let coef = if mag == 1.0 { String::new() } else { format!("{} ", format_number(mag)) };
        let piece = if i == 0 && sign == "+" {
            format!(" {coef}{}", names[v.0])
        } else {
            format!(" {sign} {coef}{}", names[v.0])
        };
        w.push(&piece);
    }
}

/// Serializes a linear model. Models with products must be linearized first.
pub fn write_lp(model: &MipModel) -> Result<String, MipError> {
    model.validate()?;
    if !model.is_linear() {
        return Err(MipError::NonLinear(format!("model {} has product terms", model.name)));
    }
    let names = escaped_names(model.vars.iter().map(|v| v.name.as_str()), "variable")?;
    let row_names = escaped_names(model.constraints.iter().map(|c| c.name.as_str()), "constraint")?;
    let mut w = LineWriter { out: String::new(), line_len: 0 };
    w.out.push_str(&format!("\\ Problem name: {}\n", model.name.replace('\n', " ")));
    for (k, v) in &model.metadata {
        w.out.push_str(&format!("\\ meta {} = {}\n", k.replace('\n', " "), v.replace('\n', " ")));
    }
    w.out.push_str(match model.sense {
        ObjectiveSense::Maximize => "Maximize\n",
        ObjectiveSense::Minimize => "Minimize\n",
    });
    w.push(" obj:");
    write_terms(&mut w, &model.objective.terms, &names);
    let k = model.objective.constant;
    if model.objective.terms.is_empty() {
        w.push(&format!(" {}", format_number(k)));
    } else if k != 0.0 {
        let sign = if k < 0.0 { "-" } else { "+" };
        w.push(&format!(" {sign} {}", format_number(k.abs())));
    }
    w.newline();
    w.out.push_str("Subject To\n");
    for (c, name) in model.constraints.iter().zip(&row_names) {
        w.push(&format!(" {name}:"));
        if c.expr.terms.is_empty() {
            if let Some(first) = names.first() {
                w.push(&format!(" 0 {first}"));
            }
        } else {
            write_terms(&mut w, &c.expr.terms, &names);
        }
        w.push(&format!(" {} {}", c.sense.symbol(), format_number(c.rhs)));
        w.newline();
    }
    w.out.push_str("Bounds\n");
    for (v, name) in model.vars.iter().zip(&names) {
        let line = match (v.lower.is_finite(), v.upper.is_finite()) {
            (true, true) => format!(" {} <= {name} <= {}", format_number(v.lower), format_number(v.upper)),
            (true, false) => format!(" {name} >= {}", format_number(v.lower)),
            (false, true) => format!(" -inf <= {name} <= {}", format_number(v.upper)),
            (false, false) => format!(" {name} free"),
        };
        w.out.push_str(&line);
        w.out.push('\n');
    }
    let binaries: Vec<&String> =
        model.vars.iter().zip(&names).filter(|(v, _)| v.kind == VarKind::Binary).map(|(_, n)| n).collect();
    if !binaries.is_empty() {
        w.out.push_str("Binary\n");
        w.line_len = 0;
        for name in binaries {
            w.push(&format!(" {name}"));
        }
        w.newline();
    }
    w.out.push_str("End\n");
    Ok(w.out)
}

pub fn write_lp_file(model: &MipModel, path: &Path) -> Result<(), MipError> {
    std::fs::write(path, write_lp(model)?)?;
    Ok(())
}

pub fn read_lp_file(path: &Path) -> Result<MipModel, MipError> {
    parse_lp(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Plus,
    Minus,
    Colon,
    Cmp(Sense),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Preamble,
    Objective,
    Constraints,
    Bounds,
    Binary,
    End,
}

fn parse_err(line: usize, message: impl Into<String>) -> MipError {
    MipError::Parse { line, message: message.into() }
}

fn lex(text: &str, line: usize, out: &mut Vec<(Tok, usize)>) -> Result<(), MipError> {
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        match c {
            '+' => {
                out.push((Tok::Plus, line));
                i += 1;
            }
            '-' => {
                out.push((Tok::Minus, line));
                i += 1;
            }
            ':' => {
                out.push((Tok::Colon, line));
                i += 1;
            }
            '<' | '>' | '=' => {
                let mut j = i + 1;
                while j < chars.len() && matches!(chars[j], '<' | '>' | '=') {
                    j += 1;
                }
                let op: String = chars[i..j].iter().collect();
                let sense = match op.as_str() {
                    "<=" | "=<" | "<" => Sense::Le,
                    ">=" | "=>" | ">" => Sense::Ge,
                    "=" => Sense::Eq,
                    _ => return Err(parse_err(line, format!("unknown operator {op:?}"))),
                };
                out.push((Tok::Cmp(sense), line));
                i = j;
            }
            '[' | ']' | '^' => return Err(parse_err(line, "quadratic terms are not supported")),
            _ if c.is_ascii_digit() || c == '.' => {
                let mut j = i;
                while j < chars.len() {
                    let d = chars[j];
                    let exp_sign = matches!(d, '+' | '-') && j > i && matches!(chars[j - 1], 'e' | 'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        j += 1;
                    } else {
                        break;
                    }
                }
                let s: String = chars[i..j].iter().collect();
                let v: f64 = s.parse().map_err(|_| parse_err(line, format!("bad number {s:?}")))?;
                out.push((Tok::Num(v), line));
                i = j;
            }
            _ => {
                let mut j = i;
                while j < chars.len() && !chars[j].is_whitespace() && !matches!(chars[j], '+' | '-' | ':' | '<' | '>' | '=')
                {
                    j += 1;
                }
                out.push((Tok::Name(chars[i..j].iter().collect()), line));
                i = j;
            }
        }
    }
    Ok(())
}

/// Recognizes a section header at the start of a line and returns the rest.
fn header(line: &str) -> Option<(Section, Option<ObjectiveSense>, &str)> {
    let lower = line.to_ascii_lowercase();
    let table: &[(&str, Section, Option<ObjectiveSense>)] = &[
        ("maximize", Section::Objective, Some(ObjectiveSense::Maximize)),
        ("maximum", Section::Objective, Some(ObjectiveSense::Maximize)),
        ("max", Section::Objective, Some(ObjectiveSense::Maximize)),
        ("minimize", Section::Objective, Some(ObjectiveSense::Minimize)),
        ("minimum", Section::Objective, Some(ObjectiveSense::Minimize)),
        ("min", Section::Objective, Some(ObjectiveSense::Minimize)),
        ("subject to", Section::Constraints, None),
        ("such that", Section::Constraints, None),
        ("s.t.", Section::Constraints, None),
        ("st", Section::Constraints, None),
        ("bounds", Section::Bounds, None),
        ("bound", Section::Bounds, None),
        ("binaries", Section::Binary, None),
        ("binary", Section::Binary, None),
        ("bin", Section::Binary, None),
        ("end", Section::End, None),
    ];
    for &(kw, section, sense) in table {
        if let Some(rest) = lower.strip_prefix(kw) {
            if rest.is_empty() || rest.starts_with(char::is_whitespace) {
                return Some((section, sense, &line[kw.len()..]));
            }
        }
    }
    None
}

/// Name, coefficients, sense and right-hand side of one constraint row.
type ParsedRow = (String, Vec<(String, f64)>, Sense, f64);

struct Parsed {
    name: String,
    metadata: BTreeMap<String, String>,
    sense: ObjectiveSense,
    objective: (Vec<(String, f64)>, f64),
    rows: Vec<ParsedRow>,
    bounds: Vec<(String, f64, f64)>,
    binaries: Vec<String>,
    appearance: Vec<String>,
}

struct Cursor<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn peek_at(&self, off: usize) -> Option<&Tok> {
        self.toks.get(self.pos + off).map(|(t, _)| t)
    }

    fn line(&self) -> usize {
        self.toks.get(self.pos).or(self.toks.last()).map_or(0, |&(_, l)| l)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn label(&mut self) -> Option<String> {
        if let (Some(Tok::Name(n)), Some(Tok::Colon)) = (self.peek(), self.peek_at(1)) {
            let n = n.clone();
            self.pos += 2;
            Some(n)
        } else {
            None
        }
    }

    /// Reads `[+-] [coef] name | [+-] number` items until a non-term token.
    fn linear(&mut self) -> Result<(Vec<(String, f64)>, f64), MipError> {
        let mut terms = Vec::new();
        let mut constant = 0.0;
        loop {
            let mut sign = 1.0;
            let mut saw_sign = false;
            while let Some(t @ (Tok::Plus | Tok::Minus)) = self.peek() {
                if *t == Tok::Minus {
                    sign = -sign;
                }
                saw_sign = true;
                self.pos += 1;
            }
            match self.peek().cloned() {
                Some(Tok::Num(c)) => {
                    self.pos += 1;
                    match (self.peek().cloned(), self.peek_at(1)) {
                        (Some(Tok::Name(n)), next) if next != Some(&Tok::Colon) => {
                            self.pos += 1;
                            terms.push((n, sign * c));
                        }
                        _ => constant += sign * c,
                    }
                }
                Some(Tok::Name(n)) if self.peek_at(1) != Some(&Tok::Colon) => {
                    self.pos += 1;
                    terms.push((n, sign));
                }
                _ => {
                    if saw_sign {
                        return Err(parse_err(self.line(), "dangling sign"));
                    }
                    return Ok((terms, constant));
                }
            }
        }
    }
}

fn bound_value(toks: &[Tok], line: usize) -> Result<(f64, usize), MipError> {
    let mut sign = 1.0;
    let mut i = 0;
    while let Some(t @ (Tok::Plus | Tok::Minus)) = toks.get(i) {
        if *t == Tok::Minus {
            sign = -sign;
        }
        i += 1;
    }
    let v = match toks.get(i) {
        Some(Tok::Num(v)) => *v,
        Some(Tok::Name(n)) if matches!(n.to_ascii_lowercase().as_str(), "inf" | "infinity") => f64::INFINITY,
        other => return Err(parse_err(line, format!("expected a bound value, found {other:?}"))),
    };
    let v = sign * v;
    let v = if v >= 1e30 {
        f64::INFINITY
    } else if v <= -1e30 {
        f64::NEG_INFINITY
    } else {
        v
    };
    Ok((v, i + 1))
}

fn parse_bound_line(toks: &[Tok], line: usize) -> Result<(String, Option<f64>, Option<f64>), MipError> {
    let name_at = |i: usize| match toks.get(i) {
        Some(Tok::Name(n)) => Ok(n.clone()),
        other => Err(parse_err(line, format!("expected a variable name, found {other:?}"))),
    };
    if toks.len() == 2 {
        if let (Tok::Name(n), Tok::Name(kw)) = (&toks[0], &toks[1]) {
            if kw.eq_ignore_ascii_case("free") {
                return Ok((n.clone(), Some(f64::NEG_INFINITY), Some(f64::INFINITY)));
            }
        }
    }
    let apply = |sense: Sense, v: f64, var_on_left: bool| -> (Option<f64>, Option<f64>) {
        match (sense, var_on_left) {
            (Sense::Eq, _) => (Some(v), Some(v)),
            (Sense::Le, true) | (Sense::Ge, false) => (None, Some(v)),
            (Sense::Ge, true) | (Sense::Le, false) => (Some(v), None),
        }
    };
    if let Some(Tok::Name(n)) = toks.first() {
        if !matches!(n.to_ascii_lowercase().as_str(), "inf" | "infinity") {
            // name op value
            let Some(Tok::Cmp(s)) = toks.get(1) else {
                return Err(parse_err(line, "expected a comparison after the variable"));
            };
            let (v, used) = bound_value(&toks[2..], line)?;
            if 2 + used != toks.len() {
                return Err(parse_err(line, "trailing tokens in bound"));
            }
            let (lo, hi) = apply(*s, v, true);
            return Ok((n.clone(), lo, hi));
        }
    }
    // value op name [op value]
    let (v1, used) = bound_value(toks, line)?;
    let Some(Tok::Cmp(s1)) = toks.get(used) else {
        return Err(parse_err(line, "expected a comparison in bound"));
    };
    let name = name_at(used + 1)?;
    let (mut lo, mut hi) = apply(*s1, v1, false);
    let rest = &toks[used + 2..];
    if !rest.is_empty() {
        let Tok::Cmp(s2) = &rest[0] else {
            return Err(parse_err(line, "expected a comparison in bound"));
        };
        let (v2, used2) = bound_value(&rest[1..], line)?;
        if 1 + used2 != rest.len() {
            return Err(parse_err(line, "trailing tokens in bound"));
        }
        let (l2, h2) = apply(*s2, v2, true);
        lo = l2.or(lo);
        hi = h2.or(hi);
    }
    Ok((name, lo, hi))
}

/// Parses an LP file. Integer (non-binary) sections are rejected.
pub fn parse_lp(text: &str) -> Result<MipModel, MipError> {
    let mut p = Parsed {
        name: "lp".into(),
        metadata: BTreeMap::new(),
        sense: ObjectiveSense::Minimize,
        objective: (Vec::new(), 0.0),
        rows: Vec::new(),
        bounds: Vec::new(),
        binaries: Vec::new(),
        appearance: Vec::new(),
    };
    let mut section = Section::Preamble;
    let mut objective_toks = Vec::new();
    let mut row_toks = Vec::new();
    let mut bound_lines: Vec<(Vec<Tok>, usize)> = Vec::new();
    let mut seen_objective = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let (content, comment) = match raw.find('\\') {
            Some(i) => (&raw[..i], Some(raw[i + 1..].trim())),
            None => (raw, None),
        };
        if let Some(c) = comment {
            if let Some(n) = c.strip_prefix("Problem name:") {
                p.name = n.trim().to_string();
            } else if let Some(kv) = c.strip_prefix("meta ") {
                if let Some((k, v)) = kv.split_once(" = ") {
                    p.metadata.insert(k.to_string(), v.to_string());
                }
            }
        }
        let mut content = content.trim();
        if content.is_empty() {
            continue;
        }
        if let Some((s, sense, rest)) = header(content) {
            if s == Section::Objective {
                if seen_objective {
                    return Err(parse_err(line_no, "second objective section"));
                }
                seen_objective = true;
                p.sense = sense.expect("objective header carries a sense");
            }
            section = s;
            content = rest.trim();
            if content.is_empty() {
                continue;
            }
        } else {
            let lower = content.to_ascii_lowercase();
            let first = lower.split_whitespace().next().unwrap_or("");
            if matches!(first, "general" | "generals" | "gen" | "integer" | "integers" | "semi-continuous" | "sos") {
                return Err(MipError::Unsupported(format!("section {first:?} on line {line_no}")));
            }
        }
        match section {
            Section::Preamble => return Err(parse_err(line_no, "content before the objective section")),
            Section::End => return Err(parse_err(line_no, "content after End")),
            Section::Objective => lex(content, line_no, &mut objective_toks)?,
            Section::Constraints => lex(content, line_no, &mut row_toks)?,
            Section::Bounds => {
                let mut toks = Vec::new();
                lex(content, line_no, &mut toks)?;
                bound_lines.push((toks.into_iter().map(|(t, _)| t).collect(), line_no));
            }
            Section::Binary => {
                p.binaries.extend(content.split_whitespace().map(str::to_string));
            }
        }
    }
    if !seen_objective {
        return Err(parse_err(0, "missing objective section"));
    }

    let mut cur = Cursor { toks: &objective_toks, pos: 0 };
    cur.label();
    p.objective = cur.linear()?;
    if let Some(t) = cur.peek() {
        return Err(parse_err(cur.line(), format!("unexpected {t:?} in objective")));
    }
    p.appearance.extend(p.objective.0.iter().map(|(n, _)| n.clone()));

    let mut cur = Cursor { toks: &row_toks, pos: 0 };
    while cur.peek().is_some() {
        let line = cur.line();
        let name = cur.label().unwrap_or_else(|| format!("R{}", p.rows.len() + 1));
        let (terms, constant) = cur.linear()?;
        let Some(Tok::Cmp(sense)) = cur.next() else {
            return Err(parse_err(line, format!("constraint {name} lacks a comparison")));
        };
        let (rhs_terms, rhs) = cur.linear()?;
        if !rhs_terms.is_empty() {
            return Err(parse_err(line, format!("constraint {name} has variables on the right-hand side")));
        }
        p.appearance.extend(terms.iter().map(|(n, _)| n.clone()));
        p.rows.push((name, terms, sense, rhs - constant));
    }
    for (toks, line) in &bound_lines {
        let (name, lo, hi) = parse_bound_line(toks, *line)?;
        p.bounds.push((name, lo.unwrap_or(f64::NAN), hi.unwrap_or(f64::NAN)));
    }
    p.appearance.extend(p.binaries.iter().cloned());
    build_model(p)
}

fn build_model(p: Parsed) -> Result<MipModel, MipError> {
    let mut order: Vec<String> = Vec::new();
    let mut listed = HashSet::new();
    for name in p.bounds.iter().map(|(n, _, _)| n).chain(&p.appearance) {
        if listed.insert(name.clone()) {
            order.push(name.clone());
        }
    }
    let binaries: HashSet<&String> = p.binaries.iter().collect();
    let mut lower: HashMap<&str, f64> = HashMap::new();
    let mut upper: HashMap<&str, f64> = HashMap::new();
    for (name, lo, hi) in &p.bounds {
        if !lo.is_nan() {
            lower.insert(name, *lo);
        }
        if !hi.is_nan() {
            upper.insert(name, *hi);
        }
    }
    let mut model = MipModel::new(p.name, p.sense);
    model.metadata = p.metadata;
    for name in &order {
        let binary = binaries.contains(name);
        let (dl, du) = if binary { (0.0, 1.0) } else { (0.0, f64::INFINITY) };
        let var = Variable {
            name: name.clone(),
            lower: lower.get(name.as_str()).copied().unwrap_or(dl),
            upper: upper.get(name.as_str()).copied().unwrap_or(du),
            kind: if binary { VarKind::Binary } else { VarKind::Continuous },
        };
        model.add_var(var)?;
    }
    let id = |m: &MipModel, n: &str| m.var_id(n).expect("every referenced name was declared");
    let terms = |m: &MipModel, ts: &[(String, f64)]| -> Vec<(VarId, f64)> { ts.iter().map(|(n, c)| (id(m, n), *c)).collect() };
    let objective = Expr { terms: terms(&model, &p.objective.0), products: Vec::new(), constant: p.objective.1 };
    model.objective = objective;
    for (name, ts, sense, rhs) in &p.rows {
        let expr = Expr { terms: terms(&model, ts), ..Expr::default() };
        model.add_constraint(name.clone(), expr, *sense, *rhs);
    }
    Ok(model)
}
