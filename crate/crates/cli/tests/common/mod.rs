#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vinedep::special::norm_ppf;

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_vinedep"))
}

/// Runs the binary with `args`.
pub fn vinedep<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(bin()).args(args).output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8 stdout")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).expect("utf-8 stderr")
}

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}

/// Column-major table to CSV text; values are written as given.
pub fn csv_text(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.join(","));
    }
    out
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    norm_ppf(rng.random_range(1e-12..1.0 - 1e-12))
}

/// Six lab-like columns, `A` a hub for `B`, `C` and `D`, a pair `E`-`F`,
/// values rounded so that ties occur.
pub fn hub_table(n: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let a = normal(&mut rng);
        let b = 0.8 * a + 0.6 * normal(&mut rng);
        let c = 0.7 * a + 0.71 * normal(&mut rng);
        let d = 0.75 * a + 0.66 * normal(&mut rng);
        let e = normal(&mut rng);
        let f = 0.6 * e + 0.8 * normal(&mut rng);
        rows.push(vec![
            format!("{:.1}", 140.0 + 3.0 * a),
            format!("{:.1}", 100.0 + 4.0 * b),
            format!("{:.2}", (0.3 * c).exp()),
            format!("{:.0}", 70.0 + 10.0 * d),
            format!("{:.2}", 4.0 + 0.4 * e),
            format!("{:.1}", 9.0 + f),
        ]);
    }
    csv_text(&["A", "B", "C", "D", "E", "F"], &rows)
}

/// Two binary columns and four continuous ones. `Sex` drives every lab
/// through a latent shift; `HF` is unrelated.
pub fn mixed_table(n: usize, seed: u64, shift: f64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let latent = normal(&mut rng);
        let sex = latent > 0.0;
        let s = if sex { shift } else { 0.0 };
        let hf = rng.random_bool(0.3);
        let labs: Vec<String> = (0..4)
            .map(|k| format!("{:.3}", 10.0 * (k + 1) as f64 + s + normal(&mut rng)))
            .collect();
        let mut row = vec![
            if sex { "M" } else { "F" }.to_string(),
            if hf { "yes" } else { "no" }.to_string(),
        ];
        row.extend(labs);
        rows.push(row);
    }
    csv_text(&["Sex", "HF", "Na", "Cl", "Hb", "HCT"], &rows)
}

pub const MIXED_SCHEMA: &str = r#"[
  {"name": "Sex", "kind": "binary"},
  {"name": "HF", "kind": "binary"},
  {"name": "Na", "kind": "continuous", "unit": "mmol/L"},
  {"name": "Cl", "kind": "continuous", "unit": "mmol/L"},
  {"name": "Hb", "kind": "continuous", "unit": "g/L"},
  {"name": "HCT", "kind": "continuous", "unit": "%"}
]"#;

/// Three hubs `H1..H3`, each with three leaves; hubs are mutually independent.
pub fn three_hub_table(n: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut header = Vec::new();
    for h in 1..=3 {
        header.push(format!("H{h}"));
        for l in 1..=3 {
            header.push(format!("L{h}{l}"));
        }
    }
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = Vec::with_capacity(12);
        for _ in 0..3 {
            let h = normal(&mut rng);
            row.push(format!("{h:.4}"));
            for _ in 0..3 {
                row.push(format!("{:.4}", 0.8 * h + 0.6 * normal(&mut rng)));
            }
        }
        rows.push(row);
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_text(&header, &rows)
}

/// `group` selects the regime: `A` drives the others when it is 1, `E` when 0.
pub fn two_regime_table(n: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let g = i % 2;
        let a = normal(&mut rng);
        let e = normal(&mut rng);
        let driver = if g == 1 { a } else { e };
        let mut row = vec![g.to_string(), format!("{a:.4}")];
        for _ in 0..3 {
            row.push(format!("{:.4}", 0.8 * driver + 0.6 * normal(&mut rng)));
        }
        row.push(format!("{e:.4}"));
        rows.push(row);
    }
    csv_text(&["group", "A", "B", "C", "D", "E"], &rows)
}

pub const REGIME_SCHEMA: &str = r#"[
  {"name": "group", "kind": "binary"},
  {"name": "A", "kind": "continuous"},
  {"name": "B", "kind": "continuous"},
  {"name": "C", "kind": "continuous"},
  {"name": "D", "kind": "continuous"},
  {"name": "E", "kind": "continuous"}
]"#;

/// Checks `text` against the undirected subset of the DOT grammar:
/// `graph ID { stmt* }` with node and edge statements and attribute lists.
pub fn parse_dot(text: &str) -> Result<(usize, usize), String> {
    let toks = dot_tokens(text)?;
    let mut p = 0;
    let expect = |p: &mut usize, want: &str| -> Result<(), String> {
        match toks.get(*p) {
            Some(t) if t == want => {
                *p += 1;
                Ok(())
            }
            other => Err(format!("expected {want:?}, found {other:?}")),
        }
    };
    let is_id = |t: &str| t.starts_with('"') || t.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.');
    expect(&mut p, "graph")?;
    if toks.get(p).is_some_and(|t| is_id(t) && t != "{") {
        p += 1;
    }
    expect(&mut p, "{")?;
    let (mut nodes, mut edges) = (0, 0);
    while toks.get(p).is_some_and(|t| t != "}") {
        let id = &toks[p];
        if !is_id(id) {
            return Err(format!("expected an identifier, found {id:?}"));
        }
        p += 1;
        if toks.get(p).is_some_and(|t| t == "--") {
            p += 1;
            match toks.get(p) {
                Some(t) if is_id(t) => p += 1,
                other => return Err(format!("edge without a target: {other:?}")),
            }
            edges += 1;
        } else {
            nodes += 1;
        }
        if toks.get(p).is_some_and(|t| t == "[") {
            p += 1;
            while toks.get(p).is_some_and(|t| t != "]") {
                if !is_id(&toks[p]) {
                    return Err(format!("bad attribute name {:?}", toks[p]));
                }
                p += 1;
                expect(&mut p, "=")?;
                match toks.get(p) {
                    Some(t) if is_id(t) => p += 1,
                    other => return Err(format!("bad attribute value {other:?}")),
                }
                if toks.get(p).is_some_and(|t| t == "," || t == ";") {
                    p += 1;
                }
            }
            expect(&mut p, "]")?;
        }
        if toks.get(p).is_some_and(|t| t == ";") {
            p += 1;
        }
    }
    expect(&mut p, "}")?;
    if p != toks.len() {
        return Err("trailing input after the graph".into());
    }
    Ok((nodes, edges))
}

fn dot_tokens(text: &str) -> Result<Vec<String>, String> {
    let mut toks = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '"' {
            let mut s = String::from('"');
            chars.next();
            loop {
                match chars.next() {
                    Some('\\') => {
                        s.push('\\');
                        s.push(chars.next().ok_or("dangling escape")?);
                    }
                    Some('"') => break,
                    Some(ch) => s.push(ch),
                    None => return Err("unterminated string".into()),
                }
            }
            s.push('"');
            toks.push(s);
        } else if c == '-' {
            chars.next();
            if chars.next() != Some('-') {
                return Err("expected --".into());
            }
            toks.push("--".into());
        } else if "{}[]=;,".contains(c) {
            toks.push(c.to_string());
            chars.next();
        } else if c.is_alphanumeric() || c == '_' || c == '.' {
            let mut s = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_alphanumeric() || ch == '_' || ch == '.' {
                    s.push(ch);
                    chars.next();
                } else {
                    break;
                }
            }
            toks.push(s);
        } else {
            return Err(format!("unexpected character {c:?}"));
        }
    }
    Ok(toks)
}
