//! Plain-text series files.
//!
//! ```text
//! fourier-taylor-series v1
//! n 2
//! radius 1.0000000000000000e0
//! center 0.0000000000000000e0 0.0000000000000000e0
//! k_max 1
//! d_max 2
//! regularity gevrey:1.0:0.5
//! coefficients 2
//! 1 0 ; 0 0 ; 5.0000000000000000e-1 0.0000000000000000e0
//! -1 0 ; 0 0 ; 5.0000000000000000e-1 0.0000000000000000e0
//! ```
//!
//! Reals are written with 17 significant digits so a write/read cycle is
//! bit-exact. Lines starting with `#` are ignored.

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use super::{Domain, FourierTaylorSeries, MultiIndex, Regularity};
use crate::error::{Error, Result};

const MAGIC: &str = "fourier-taylor-series v1";

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Serialises a series together with an optional regularity tag.
pub fn to_string(s: &FourierTaylorSeries, regularity: Option<Regularity>) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&format!("n {}\n", s.dim()));
    out.push_str(&format!("radius {}\n", real(s.domain().radius())));
    let center: Vec<String> = s.center().iter().map(|&c| real(c)).collect();
    out.push_str(&format!("center {}\n", center.join(" ")));
    out.push_str(&format!("k_max {}\n", s.k_max()));
    out.push_str(&format!("d_max {}\n", s.d_max()));
    out.push_str(&format!(
        "regularity {}\n",
        regularity.map(|r| r.tag()).unwrap_or_else(|| "none".into())
    ));
    out.push_str(&format!("coefficients {}\n", s.len()));
    for (idx, c) in s.terms() {
        let k: Vec<String> = idx.angle.iter().map(|v| v.to_string()).collect();
        let l: Vec<String> = idx.action.iter().map(|v| v.to_string()).collect();
        out.push_str(&format!("{} ; {} ; {} {}\n", k.join(" "), l.join(" "), real(c.re), real(c.im)));
    }
    out
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T> {
    tok.parse().map_err(|_| parse_err(line, format!("cannot parse `{tok}`")))
}

/// Parses the format written by [`to_string`].
pub fn from_str(text: &str) -> Result<(FourierTaylorSeries, Option<Regularity>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (no, first) = lines.next().ok_or_else(|| parse_err(0, "empty input"))?;
    if first != MAGIC {
        return Err(parse_err(no, format!("expected `{MAGIC}`")));
    }

    let mut field = |name: &str| -> Result<(usize, Vec<String>)> {
        let (no, line) = lines.next().ok_or_else(|| parse_err(0, format!("missing `{name}`")))?;
        let mut toks = line.split_whitespace();
        if toks.next() != Some(name) {
            return Err(parse_err(no, format!("expected `{name}`")));
        }
        Ok((no, toks.map(str::to_owned).collect()))
    };

    let (no, v) = field("n")?;
    let n: usize = parse_num(v.first().ok_or_else(|| parse_err(no, "missing n"))?, no)?;
    let (no, v) = field("radius")?;
    let radius: f64 = parse_num(v.first().ok_or_else(|| parse_err(no, "missing radius"))?, no)?;
    let (no, v) = field("center")?;
    let center = v.iter().map(|t| parse_num::<f64>(t, no)).collect::<Result<Vec<_>>>()?;
    if center.len() != n {
        return Err(parse_err(no, "center has wrong dimension"));
    }
    let (no, v) = field("k_max")?;
    let k_max: u32 = parse_num(v.first().ok_or_else(|| parse_err(no, "missing k_max"))?, no)?;
    let (no, v) = field("d_max")?;
    let d_max: u32 = parse_num(v.first().ok_or_else(|| parse_err(no, "missing d_max"))?, no)?;
    let (no, v) = field("regularity")?;
    let regularity = match v.first().map(String::as_str) {
        Some("none") | None => None,
        Some(tag) => Some(Regularity::parse_tag(tag).map_err(|e| parse_err(no, e.to_string()))?),
    };
    let (no, v) = field("coefficients")?;
    let count: usize = parse_num(v.first().ok_or_else(|| parse_err(no, "missing count"))?, no)?;

    let domain = Domain::new(n, radius).map_err(|e| parse_err(no, e.to_string()))?;
    let mut s = FourierTaylorSeries::zero(domain, k_max, d_max).with_center(center)?;
    let mut seen = 0;
    for (no, line) in lines.by_ref() {
        let parts: Vec<&str> = line.split(';').collect();
        if parts.len() != 3 {
            return Err(parse_err(no, "coefficient record needs three `;`-separated fields"));
        }
        let k = parts[0].split_whitespace().map(|t| parse_num::<i32>(t, no)).collect::<Result<Vec<_>>>()?;
        let l = parts[1].split_whitespace().map(|t| parse_num::<u32>(t, no)).collect::<Result<Vec<_>>>()?;
        let c = parts[2].split_whitespace().map(|t| parse_num::<f64>(t, no)).collect::<Result<Vec<_>>>()?;
        if k.len() != n || l.len() != n || c.len() != 2 {
            return Err(parse_err(no, "coefficient record has wrong arity"));
        }
        let idx = MultiIndex::new(k, l);
        if idx.angle_order() > k_max || idx.degree() > d_max {
            return Err(parse_err(no, format!("index {idx} exceeds the declared bounds")));
        }
        s.add_coeff(idx, Complex64::new(c[0], c[1]));
        seen += 1;
    }
    if seen != count {
        return Err(parse_err(0, format!("expected {count} coefficients, found {seen}")));
    }
    Ok((s, regularity))
}

pub fn write(path: &Path, s: &FourierTaylorSeries, regularity: Option<Regularity>) -> Result<()> {
    fs::write(path, to_string(s, regularity))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<(FourierTaylorSeries, Option<Regularity>)> {
    from_str(&fs::read_to_string(path)?)
}
