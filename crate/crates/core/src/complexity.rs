//! Leading-order precoding cost of each scheme and user group.
//!
//! | scheme | HM users       | LM users       |
//! |--------|----------------|----------------|
//! | FZF    | O((K MN)^3)    | O((K MN)^3)    |
//! | PZF    | O((K_h MN)^3)  | O(N_t (MN)^2)  |
//!
//! Zero forcing is dominated by the inverse of the stacked Gram matrix
//! `H H^H`; MRT only needs the conjugate transpose of each LM channel. The
//! HM column also carries the OTFS transforms, so cost falls from top left to
//! bottom right. With `K = K_h` both schemes coincide.

use serde::{Deserialize, Serialize};

use crate::channel::Group;
use crate::precoders::Scheme;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimensions {
    pub k_h: usize,
    pub k_l: usize,
    pub mn: usize,
    pub n_t: usize,
}

impl Dimensions {
    pub fn k(&self) -> usize {
        self.k_h + self.k_l
    }
}

/// Order of the Gram matrix a scheme inverts per channel draw (0 when none).
pub fn zf_gram_dim(scheme: Scheme, d: &Dimensions) -> usize {
    match scheme {
        Scheme::Fzf => d.k() * d.mn,
        Scheme::Pzf => d.k_h * d.mn,
    }
}

/// Leading-order operation count for precoding `group` under `scheme`.
pub fn leading_ops(scheme: Scheme, group: Group, d: &Dimensions) -> u128 {
    let mn = d.mn as u128;
    match (scheme, group) {
        (Scheme::Pzf, Group::Lm) => d.n_t as u128 * mn * mn,
        _ => (zf_gram_dim(scheme, d) as u128).pow(3),
    }
}

/// Complex multiply-adds in the column Cholesky factorisation of an `n x n`
/// matrix: `sum_j j (n - j) = (n^3 - n) / 6`.
pub fn cholesky_macs(n: usize) -> u128 {
    let n = n as u128;
    (n * n * n - n) / 6
}

/// Outer bisection steps to shrink `[t_min, t_max]` below `eps`.
pub fn bisection_steps(t_min: f64, t_max: f64, eps: f64) -> u32 {
    ((t_max - t_min) / eps).log2().ceil().max(0.0) as u32
}

/// Markdown table of the leading-order counts for `d`.
pub fn table_markdown(d: &Dimensions) -> String {
    let mut s = String::from("| scheme | HM users | LM users |\n|---|---|---|\n");
    for scheme in [Scheme::Fzf, Scheme::Pzf] {
        s.push_str(&format!(
            "| {} | {} | {} |\n",
            scheme.label(),
            leading_ops(scheme, Group::Hm, d),
            leading_ops(scheme, Group::Lm, d)
        ));
    }
    s
}
