//! Versioned text checkpoints. Each line is `key kind count values...`;
//! floats are stored as the hex of their IEEE-754 `f64` bit pattern so the
//! round trip is exact and independent of host byte order.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{Adam, Mlp, NnError};
use crate::scalar::Real;

pub const CHECKPOINT_MAGIC: &str = "magin-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Floats(Vec<f64>),
    Ints(Vec<u64>),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    fields: BTreeMap<String, Field>,
}

fn err(msg: impl Into<String>) -> NnError {
    NnError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put_floats<T: Real>(&mut self, key: &str, v: &[T]) {
        self.fields
            .insert(key.to_string(), Field::Floats(v.iter().map(|x| x.as_f64()).collect()));
    }

    pub fn put_ints(&mut self, key: &str, v: &[u64]) {
        self.fields.insert(key.to_string(), Field::Ints(v.to_vec()));
    }

    pub fn put_text(&mut self, key: &str, v: &str) {
        assert!(!v.contains('\n'), "checkpoint text fields are single-line");
        self.fields.insert(key.to_string(), Field::Text(v.to_string()));
    }

    pub fn floats<T: Real>(&self, key: &str) -> Result<Vec<T>, NnError> {
        match self.fields.get(key) {
            Some(Field::Floats(v)) => Ok(v.iter().map(|&x| T::lit(x)).collect()),
            Some(_) => Err(err(format!("field {key} is not a float array"))),
            None => Err(err(format!("missing field {key}"))),
        }
    }

    pub fn ints(&self, key: &str) -> Result<Vec<u64>, NnError> {
        match self.fields.get(key) {
            Some(Field::Ints(v)) => Ok(v.clone()),
            Some(_) => Err(err(format!("field {key} is not an integer array"))),
            None => Err(err(format!("missing field {key}"))),
        }
    }

    pub fn text(&self, key: &str) -> Result<&str, NnError> {
        match self.fields.get(key) {
            Some(Field::Text(v)) => Ok(v),
            Some(_) => Err(err(format!("field {key} is not text"))),
            None => Err(err(format!("missing field {key}"))),
        }
    }

    pub fn put_mlp<T: Real>(&mut self, prefix: &str, net: &Mlp<T>) {
        let sizes: Vec<u64> = net.sizes().iter().map(|&s| s as u64).collect();
        self.put_ints(&format!("{prefix}.sizes"), &sizes);
        self.put_floats(&format!("{prefix}.params"), net.params());
    }

    pub fn mlp<T: Real>(&self, prefix: &str) -> Result<Mlp<T>, NnError> {
        let sizes: Vec<usize> = self.ints(&format!("{prefix}.sizes"))?.iter().map(|&s| s as usize).collect();
        Mlp::from_parts(&sizes, self.floats(&format!("{prefix}.params"))?)
    }

    pub fn put_adam<T: Real>(&mut self, prefix: &str, opt: &Adam<T>) {
        self.put_floats(
            &format!("{prefix}.hyper"),
            &[opt.lr, opt.beta1, opt.beta2, opt.eps],
        );
        self.put_ints(&format!("{prefix}.step"), &[opt.step]);
        self.put_floats(&format!("{prefix}.m"), &opt.m);
        self.put_floats(&format!("{prefix}.v"), &opt.v);
    }

    pub fn adam<T: Real>(&self, prefix: &str) -> Result<Adam<T>, NnError> {
        let h: Vec<T> = self.floats(&format!("{prefix}.hyper"))?;
        let [lr, beta1, beta2, eps] = h[..] else {
            return Err(err(format!("{prefix}.hyper must hold 4 values")));
        };
        let step = *self
            .ints(&format!("{prefix}.step"))?
            .first()
            .ok_or_else(|| err(format!("{prefix}.step is empty")))?;
        let m = self.floats(&format!("{prefix}.m"))?;
        let v = self.floats(&format!("{prefix}.v"))?;
        if m.len() != v.len() {
            return Err(err(format!("{prefix} moment arrays differ in length")));
        }
        Ok(Adam {
            lr,
            beta1,
            beta2,
            eps,
            step,
            m,
            v,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n");
        for (k, f) in &self.fields {
            match f {
                Field::Floats(v) => {
                    let _ = write!(out, "{k} f64 {}", v.len());
                    for x in v {
                        let _ = write!(out, " {:016x}", x.to_bits());
                    }
                }
                Field::Ints(v) => {
                    let _ = write!(out, "{k} u64 {}", v.len());
                    for x in v {
                        let _ = write!(out, " {x}");
                    }
                }
                Field::Text(s) => {
                    let _ = write!(out, "{k} str {s}");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, NnError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| err("empty checkpoint"))?;
        let mut h = header.split_whitespace();
        if h.next() != Some(CHECKPOINT_MAGIC) {
            return Err(err("not a checkpoint file"));
        }
        let version: u32 = h
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err("missing version"))?;
        if version != CHECKPOINT_VERSION {
            return Err(err(format!("unsupported version {version}")));
        }
        let mut cp = Checkpoint::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let line_no = i + 2;
            let mut parts = line.splitn(3, ' ');
            let (Some(key), Some(kind)) = (parts.next(), parts.next()) else {
                return Err(err(format!("line {line_no}: malformed")));
            };
            let rest = parts.next().unwrap_or("");
            let field = match kind {
                "str" => Field::Text(rest.to_string()),
                "f64" | "u64" => {
                    let mut it = rest.split_whitespace();
                    let count: usize = it
                        .next()
                        .and_then(|c| c.parse().ok())
                        .ok_or_else(|| err(format!("line {line_no}: missing count")))?;
                    let vals: Vec<&str> = it.collect();
                    if vals.len() != count {
                        return Err(err(format!("line {line_no}: expected {count} values, found {}", vals.len())));
                    }
                    if kind == "f64" {
                        let v = vals
                            .iter()
                            .map(|s| u64::from_str_radix(s, 16).map(f64::from_bits))
                            .collect::<Result<Vec<_>, _>>()
                            .map_err(|e| err(format!("line {line_no}: {e}")))?;
                        Field::Floats(v)
                    } else {
                        let v = vals
                            .iter()
                            .map(|s| s.parse::<u64>())
                            .collect::<Result<Vec<_>, _>>()
                            .map_err(|e| err(format!("line {line_no}: {e}")))?;
                        Field::Ints(v)
                    }
                }
                other => return Err(err(format!("line {line_no}: unknown kind {other}"))),
            };
            cp.fields.insert(key.to_string(), field);
        }
        Ok(cp)
    }
}
