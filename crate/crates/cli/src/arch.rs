//! Compact architecture strings, e.g.
//! `conv6k5,relu,maxpool2,conv16k5,relu,maxpool2,flatten,dense120,relu,dense84,relu,dense10`.
//!
//! Tokens: `conv<C>k<K>[s<S>][p<P>]`, `maxpool<K>[s<S>]`, `avgpool<K>[s<S>]`,
//! `dense<N>`, `relu`, `flatten`, `res<I>` (add the output of layer `I`).
//! Pooling stride defaults to the kernel size, conv stride to 1.

use pathprof::nn::{Network, NetworkBuilder, Shape};
use pathprof::{Error, Result};

pub const LENET: &str = "conv6k5,relu,maxpool2,conv16k5,relu,maxpool2,flatten,dense120,relu,dense84,relu,dense10";

/// Splits `s` into a leading number and the remainder.
fn number(s: &str) -> Option<(usize, &str)> {
    let end = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    Some((s[..end].parse().ok()?, &s[end..]))
}

/// Parses optional `<letter><number>` suffixes in any order.
fn options(mut s: &str, allowed: &str) -> Option<Vec<(char, usize)>> {
    let mut out = Vec::new();
    while let Some(c) = s.chars().next() {
        if !allowed.contains(c) {
            return None;
        }
        let (v, rest) = number(&s[1..])?;
        out.push((c, v));
        s = rest;
    }
    Some(out)
}

fn opt(opts: &[(char, usize)], key: char, default: usize) -> usize {
    opts.iter().rev().find(|(k, _)| *k == key).map_or(default, |(_, v)| *v)
}

pub fn build(desc: &str, input: Shape, seed: u64) -> Result<Network> {
    let desc = if desc.eq_ignore_ascii_case("lenet") { LENET } else { desc };
    let bad = |tok: &str| Error::domain(format!("bad architecture token {tok:?}"));
    let mut b = NetworkBuilder::new(input);
    for tok in desc.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        b = if tok == "relu" {
            b.relu()
        } else if tok == "flatten" {
            b.flatten()
        } else if let Some(rest) = tok.strip_prefix("conv") {
            let (ch, rest) = number(rest).ok_or_else(|| bad(tok))?;
            let opts = options(rest, "ksp").ok_or_else(|| bad(tok))?;
            if !opts.iter().any(|(k, _)| *k == 'k') {
                return Err(bad(tok));
            }
            b.conv(ch, opt(&opts, 'k', 0), opt(&opts, 's', 1), opt(&opts, 'p', 0))
        } else if let Some(rest) = tok.strip_prefix("maxpool").or_else(|| tok.strip_prefix("avgpool")) {
            let (k, rest) = number(rest).ok_or_else(|| bad(tok))?;
            let opts = options(rest, "s").ok_or_else(|| bad(tok))?;
            if tok.starts_with("max") {
                b.max_pool(k, opt(&opts, 's', k))
            } else {
                b.avg_pool(k, opt(&opts, 's', k))
            }
        } else if let Some(rest) = tok.strip_prefix("dense") {
            match number(rest) {
                Some((n, "")) => b.dense(n),
                _ => return Err(bad(tok)),
            }
        } else if let Some(rest) = tok.strip_prefix("res") {
            match number(rest) {
                Some((i, "")) => b.residual(i),
                _ => return Err(bad(tok)),
            }
        } else {
            return Err(bad(tok));
        };
    }
    b.build(seed)
}
