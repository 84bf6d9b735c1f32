//! Finite abelian groups presented as products of cyclic factors.
//!
//! A group is `Z/n_1 x ... x Z/n_k`. Elements are mixed-radix indices
//! (row-major over the factor list), which doubles as the canonical order:
//! index order equals lexicographic order on coordinate vectors. The dual
//! group is self-labeled: a dual element `xi` pairs with `x` through
//! `<xi, x> = sum_i xi_i * x_i / n_i  (mod 1)`, and the character is
//! `chi_xi(x) = exp(2*pi*i*<xi, x>)`. Pairings are computed as exact
//! rationals over `lcm(n_i)`, so "the pairing vanishes" is a decidable
//! integer predicate, never a float comparison.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Hard ceiling on group order. Everything here is desk scale; this guards
/// against accidental huge allocations, not against legitimate use.
pub const MAX_ORDER: u64 = 1 << 22;

#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupSpec {
    factors: Vec<u64>,
    #[serde(skip)]
    strides: Vec<u64>,
    order: u64,
    /// lcm of the factors: common denominator for pairings.
    #[serde(skip)]
    lcm: u64,
}

impl std::fmt::Debug for GroupSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Z/{:?}", self.factors)
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl GroupSpec {
    /// Build a group from its cyclic factor list. Factors must each be >= 2;
    /// an empty list is the trivial group.
    pub fn new(factors: Vec<u64>) -> Result<Self> {
        let mut order: u64 = 1;
        let mut lcm: u64 = 1;
        for &n in &factors {
            if n < 2 {
                return Err(Error::Argument(format!(
                    "cyclic factor must be >= 2, got {n}"
                )));
            }
            order = order
                .checked_mul(n)
                .filter(|&o| o <= MAX_ORDER)
                .ok_or_else(|| {
                    Error::Argument(format!("group order exceeds desk-scale cap {MAX_ORDER}"))
                })?;
            lcm = lcm / gcd(lcm, n) * n;
        }
        let mut strides = vec![1u64; factors.len()];
        for i in (0..factors.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * factors[i + 1];
        }
        Ok(GroupSpec {
            factors,
            strides,
            order,
            lcm,
        })
    }

    pub fn cyclic(n: u64) -> Result<Self> {
        if n == 1 {
            Ok(Self::trivial())
        } else {
            Self::new(vec![n])
        }
    }

    pub fn trivial() -> Self {
        GroupSpec {
            factors: vec![],
            strides: vec![],
            order: 1,
            lcm: 1,
        }
    }

    /// Restore derived fields after deserialization.
    pub fn revalidate(self) -> Result<Self> {
        Self::new(self.factors)
    }

    pub fn factors(&self) -> &[u64] {
        &self.factors
    }

    pub fn rank(&self) -> usize {
        self.factors.len()
    }

    pub fn order(&self) -> u64 {
        self.order
    }

    pub fn zero(&self) -> u64 {
        0
    }

    pub fn elements(&self) -> std::ops::Range<u64> {
        0..self.order
    }

    pub fn coords(&self, idx: u64) -> Vec<u64> {
        debug_assert!(idx < self.order);
        let mut c = Vec::with_capacity(self.factors.len());
        let mut rem = idx;
        for i in 0..self.factors.len() {
            c.push(rem / self.strides[i]);
            rem %= self.strides[i];
        }
        c
    }

    pub fn index_of(&self, coords: &[u64]) -> Result<u64> {
        if coords.len() != self.factors.len() {
            return Err(Error::Shape(format!(
                "element has {} coordinates, group has rank {}",
                coords.len(),
                self.factors.len()
            )));
        }
        let mut idx = 0u64;
        for (i, &c) in coords.iter().enumerate() {
            if c >= self.factors[i] {
                return Err(Error::Shape(format!(
                    "coordinate {c} out of range for Z/{}",
                    self.factors[i]
                )));
            }
            idx += c * self.strides[i];
        }
        Ok(idx)
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        if self.factors.len() == 1 {
            let n = self.factors[0];
            return (a + b) % n;
        }
        let mut out = 0u64;
        let mut ra = a;
        let mut rb = b;
        for i in 0..self.factors.len() {
            let s = self.strides[i];
            let ca = ra / s;
            let cb = rb / s;
            ra %= s;
            rb %= s;
            out += ((ca + cb) % self.factors[i]) * s;
        }
        out
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if self.factors.len() == 1 {
            let n = self.factors[0];
            return (n - a % n) % n;
        }
        let mut out = 0u64;
        let mut ra = a;
        for i in 0..self.factors.len() {
            let s = self.strides[i];
            let ca = ra / s;
            ra %= s;
            out += ((self.factors[i] - ca) % self.factors[i]) * s;
        }
        out
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        self.add(a, self.neg(b))
    }

    /// Pairing `<xi, x>` as an exact fraction `num / lcm` with `num` reduced
    /// into `[0, lcm)`.
    #[inline]
    pub fn pairing_num(&self, xi: u64, x: u64) -> u64 {
        let l = self.lcm as u128;
        let mut num: u128 = 0;
        let mut rxi = xi;
        let mut rx = x;
        for i in 0..self.factors.len() {
            let s = self.strides[i];
            let ci = rxi / s;
            let cx = rx / s;
            rxi %= s;
            rx %= s;
            let w = l / self.factors[i] as u128;
            num = (num + ci as u128 * cx as u128 % l * w) % l;
        }
        num as u64
    }

    pub fn pairing_denom(&self) -> u64 {
        self.lcm
    }

    /// True iff `<xi, x> = 0 (mod 1)` exactly.
    #[inline]
    pub fn pairing_is_zero(&self, xi: u64, x: u64) -> bool {
        self.pairing_num(xi, x) == 0
    }

    /// `chi_xi(x) = exp(2 pi i <xi, x>)`.
    pub fn char_value(&self, xi: u64, x: u64) -> Complex64 {
        let t = self.pairing_num(xi, x) as f64 / self.lcm as f64;
        let (s, c) = (2.0 * std::f64::consts::PI * t).sin_cos();
        Complex64::new(c, s)
    }

    /// `|1 - chi_xi(x)| = 2 |sin(pi <xi, x>)|`, computed through the folded
    /// exact pairing so that the distance is bit-for-bit symmetric in `x`.
    pub fn char_unit_distance(&self, xi: u64, x: u64) -> f64 {
        let num = self.pairing_num(xi, x);
        let folded = num.min(self.lcm - num);
        2.0 * (std::f64::consts::PI * folded as f64 / self.lcm as f64).sin()
    }
}

/// A verified-closed subgroup: sorted element list plus the generators it was
/// built from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subgroup {
    pub elements: Vec<u64>,
    pub generators: Vec<u64>,
}

impl Subgroup {
    pub fn order(&self) -> u64 {
        self.elements.len() as u64
    }

    pub fn contains(&self, x: u64) -> bool {
        self.elements.binary_search(&x).is_ok()
    }
}

/// A subgroup of the dual group, with the same storage as `Subgroup`. Kept a
/// distinct type so element and frequency sides cannot be mixed up.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DualSubgroup {
    pub elements: Vec<u64>,
    pub generators: Vec<u64>,
}

impl DualSubgroup {
    pub fn order(&self) -> u64 {
        self.elements.len() as u64
    }

    pub fn contains(&self, xi: u64) -> bool {
        self.elements.binary_search(&xi).is_ok()
    }

    pub fn trivial() -> Self {
        DualSubgroup {
            elements: vec![0],
            generators: vec![],
        }
    }

    /// View as a plain subgroup of the (self-dual) labeling group.
    pub fn as_subgroup(&self) -> Subgroup {
        Subgroup {
            elements: self.elements.clone(),
            generators: self.generators.clone(),
        }
    }
}

fn closure(g: &GroupSpec, generators: &[u64]) -> Vec<u64> {
    let mut seen = vec![false; g.order() as usize];
    seen[0] = true;
    let mut frontier = vec![0u64];
    let mut out = vec![0u64];
    while let Some(x) = frontier.pop() {
        for &gen in generators {
            let y = g.add(x, gen);
            if !seen[y as usize] {
                seen[y as usize] = true;
                out.push(y);
                frontier.push(y);
            }
        }
    }
    // Generators of finite order make inverses reachable, so the closure
    // under addition alone is already a subgroup.
    out.sort_unstable();
    out
}

/// Closure of a generator list.
pub fn enumerate_subgroup(g: &GroupSpec, generators: &[u64]) -> Result<Subgroup> {
    for &x in generators {
        if x >= g.order() {
            return Err(Error::Shape(format!("generator {x} out of range")));
        }
    }
    Ok(Subgroup {
        elements: closure(g, generators),
        generators: generators.to_vec(),
    })
}

/// Span of a set of dual elements.
pub fn span_dual(g: &GroupSpec, generators: &[u64]) -> Result<DualSubgroup> {
    for &x in generators {
        if x >= g.order() {
            return Err(Error::Shape(format!("dual generator {x} out of range")));
        }
    }
    Ok(DualSubgroup {
        elements: closure(g, generators),
        generators: generators.to_vec(),
    })
}

/// Annihilator `H = V-perp = { x : <xi, x> = 0 for all xi in V }`.
/// Always satisfies `|H| * |V| = |G|`.
pub fn annihilator(g: &GroupSpec, v: &DualSubgroup) -> Subgroup {
    let gens = &v.generators;
    let elements: Vec<u64> = g
        .elements()
        .filter(|&x| gens.iter().all(|&xi| g.pairing_is_zero(xi, x)))
        .collect();
    debug_assert_eq!(elements.len() as u64 * v.order(), g.order());
    Subgroup {
        elements,
        generators: vec![],
    }
}

/// Dual annihilator `V = H-perp = { xi : <xi, h> = 0 for all h in H }`.
pub fn dual_annihilator(g: &GroupSpec, h: &Subgroup) -> DualSubgroup {
    // Testing against generators suffices; fall back to all elements when the
    // subgroup was built without generators.
    let probes: &[u64] = if h.generators.is_empty() {
        &h.elements
    } else {
        &h.generators
    };
    let elements: Vec<u64> = g
        .elements()
        .filter(|&xi| probes.iter().all(|&x| g.pairing_is_zero(xi, x)))
        .collect();
    debug_assert_eq!(elements.len() as u64 * h.order(), g.order());
    DualSubgroup {
        elements,
        generators: vec![],
    }
}

// ---------------------------------------------------------------------------
// Quotients via Smith reduction.
// ---------------------------------------------------------------------------

/// Quotient projection `G -> G/H` with the image presented canonically as a
/// product of cyclic factors (invariant-factor chain, trivial factors
/// dropped). The projection table is materialized.
#[derive(Clone, Debug)]
pub struct QuotientMap {
    pub parent: GroupSpec,
    pub image: GroupSpec,
    pub kernel: Subgroup,
    /// parent element index -> image element index
    pub table: Vec<u64>,
    /// Rows of the left reduction matrix for image coordinates, one per image
    /// factor, each of parent-rank length. Kept for character pullback.
    u_rows: Vec<Vec<i128>>,
}

fn div_floor(a: i128, b: i128) -> i128 {
    a.div_euclid(b)
}

/// Diagonalize `m` by unimodular row and column operations, accumulating row
/// operations into `u`.
fn diagonalize(m: &mut [Vec<i128>], u: &mut [Vec<i128>], k: usize, cols: usize) {
    for t in 0..k.min(cols) {
        loop {
            let mut piv: Option<(usize, usize)> = None;
            for i in t..k {
                for j in t..cols {
                    if m[i][j] != 0
                        && piv.map_or(true, |(pi, pj)| m[i][j].abs() < m[pi][pj].abs())
                    {
                        piv = Some((i, j));
                    }
                }
            }
            let Some((pi, pj)) = piv else { break };
            m.swap(t, pi);
            u.swap(t, pi);
            if pj != t {
                for row in m.iter_mut() {
                    row.swap(t, pj);
                }
            }
            let mut dirty = false;
            for i in t + 1..k {
                let q = div_floor(m[i][t], m[t][t]);
                if q != 0 {
                    for j in 0..cols {
                        let v = m[t][j];
                        m[i][j] -= q * v;
                    }
                    for j in 0..k {
                        let v = u[t][j];
                        u[i][j] -= q * v;
                    }
                }
                if m[i][t] != 0 {
                    dirty = true;
                }
            }
            for j in t + 1..cols {
                let q = div_floor(m[t][j], m[t][t]);
                if q != 0 {
                    for row in m.iter_mut() {
                        let v = row[t];
                        row[j] -= q * v;
                    }
                }
                if m[t][j] != 0 {
                    dirty = true;
                }
            }
            if !dirty {
                break;
            }
        }
        if m[t][t] < 0 {
            for j in 0..cols {
                m[t][j] = -m[t][j];
            }
            for j in 0..k {
                u[t][j] = -u[t][j];
            }
        }
    }
}

/// Smith reduction restricted to what the quotient needs: returns the left
/// transform `U` and the invariant-factor diagonal `d_1 | d_2 | ... | d_k`.
fn smith_left(mut m: Vec<Vec<i128>>, k: usize) -> (Vec<Vec<i128>>, Vec<i128>) {
    let cols = m.first().map_or(0, |r| r.len());
    let mut u: Vec<Vec<i128>> = (0..k)
        .map(|i| {
            let mut row = vec![0i128; k];
            row[i] = 1;
            row
        })
        .collect();
    loop {
        diagonalize(&mut m, &mut u, k, cols);
        let viol = (0..k.saturating_sub(1)).find(|&i| {
            let a = m[i][i];
            let b = m[i + 1][i + 1];
            a != 0 && b % a != 0
        });
        match viol {
            Some(i) => {
                // Fold column i+1 into column i and re-reduce; the classical
                // gcd argument makes this terminate.
                for row in m.iter_mut() {
                    let v = row[i + 1];
                    row[i] += v;
                }
            }
            None => break,
        }
    }
    let diag = (0..k).map(|i| m[i][i]).collect();
    (u, diag)
}

/// Quotient `G / H`. The image group is canonical (invariant factors), the
/// projection table is total, and `pi(x) = 0  iff  x in H` is verified before
/// returning.
pub fn quotient(g: &GroupSpec, h: &Subgroup) -> Result<QuotientMap> {
    let k = g.rank();
    if h.elements.is_empty() || h.elements[0] != 0 {
        return Err(Error::Argument("kernel must contain 0".into()));
    }
    for &x in &h.elements {
        if x >= g.order() {
            return Err(Error::Shape(format!("kernel element {x} out of range")));
        }
    }
    // Relation lattice: columns n_i * e_i, plus one column per kernel
    // generator (or per element when no generator list is attached).
    let kgens: &[u64] = if h.generators.is_empty() {
        &h.elements
    } else {
        &h.generators
    };
    let mut mat: Vec<Vec<i128>> = vec![vec![0; k + kgens.len()]; k];
    for i in 0..k {
        mat[i][i] = g.factors()[i] as i128;
    }
    for (c, &hx) in kgens.iter().enumerate() {
        let coords = g.coords(hx);
        for i in 0..k {
            mat[i][k + c] = coords[i] as i128;
        }
    }
    let (u, diag) = smith_left(mat, k);
    for &d in &diag {
        if d <= 0 {
            return Err(Error::Shape("quotient relation lattice lost rank".into()));
        }
    }
    let mut factors = Vec::new();
    let mut u_rows = Vec::new();
    for (i, &d) in diag.iter().enumerate() {
        if d > 1 {
            factors.push(d as u64);
            u_rows.push(u[i].clone());
        }
    }
    let image = GroupSpec::new(factors)?;
    let expected = g.order() / h.order();
    if image.order() != expected {
        return Err(Error::Shape(format!(
            "quotient order {} != |G|/|H| = {}",
            image.order(),
            expected
        )));
    }
    // Materialize the projection and verify exactness of the kernel.
    let mut table = vec![0u64; g.order() as usize];
    let mut zeros = 0u64;
    for x in g.elements() {
        let coords = g.coords(x);
        let mut img = Vec::with_capacity(u_rows.len());
        for (row, f) in u_rows.iter().zip(image.factors()) {
            let mut s: i128 = 0;
            for (j, &c) in coords.iter().enumerate() {
                s += row[j] * c as i128;
            }
            img.push(s.rem_euclid(*f as i128) as u64);
        }
        let y = image.index_of(&img)?;
        table[x as usize] = y;
        if y == 0 {
            zeros += 1;
        }
    }
    if zeros != h.order() || h.elements.iter().any(|&x| table[x as usize] != 0) {
        return Err(Error::Shape(
            "projection kernel does not match the requested subgroup".into(),
        ));
    }
    Ok(QuotientMap {
        parent: g.clone(),
        image,
        kernel: h.clone(),
        table,
        u_rows,
    })
}

impl QuotientMap {
    #[inline]
    pub fn project(&self, x: u64) -> u64 {
        self.table[x as usize]
    }

    /// Image of a set (sorted, deduplicated).
    pub fn project_set(&self, a: &[u64]) -> Vec<u64> {
        let mut out: Vec<u64> = a.iter().map(|&x| self.project(x)).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// The unique parent dual element `xi` with
    /// `chi_xi(x) = chi_eta(pi(x))` for all `x`.
    pub fn pull_back_character(&self, eta: u64) -> Result<u64> {
        let ecoords = self.image.coords(eta);
        let dvals = self.image.factors();
        let mut l: i128 = 1;
        for &d in dvals {
            let d = d as i128;
            l = l / num_integer::gcd(l, d) * d;
        }
        let mut coords = Vec::with_capacity(self.parent.rank());
        for i in 0..self.parent.rank() {
            let n = self.parent.factors()[i] as i128;
            let mut s: i128 = 0;
            for (j, &d) in dvals.iter().enumerate() {
                s += ecoords[j] as i128 * self.u_rows[j][i] * (l / d as i128);
            }
            let num = n * s;
            if num % l != 0 {
                return Err(Error::Shape(
                    "character pullback is not integral; reduction matrix corrupt".into(),
                ));
            }
            coords.push((num / l).rem_euclid(n) as u64);
        }
        self.parent.index_of(&coords)
    }
}

/// Fiberwise sum (or average) of a function along the projection.
pub fn push_forward(q: &QuotientMap, f: &[f64], averaged: bool) -> Result<Vec<f64>> {
    if f.len() as u64 != q.parent.order() {
        return Err(Error::Shape(format!(
            "function table has {} entries, group has order {}",
            f.len(),
            q.parent.order()
        )));
    }
    let mut out = vec![0.0; q.image.order() as usize];
    for (x, &v) in f.iter().enumerate() {
        out[q.table[x] as usize] += v;
    }
    if averaged {
        let scale = 1.0 / q.kernel.order() as f64;
        for v in &mut out {
            *v *= scale;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Freiman-style modeling of integer sets inside cyclic groups.
// ---------------------------------------------------------------------------

/// Result of embedding an integer set into `Z/N` without order-`m` wraps.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelingResult {
    /// `2 m diam(A) + 1`: always admissible.
    pub baseline_n: u64,
    /// Smallest admissible modulus found by the descending search.
    pub modulus: u64,
    pub order: u8,
    /// `wrap_certificate[j]` verifies order `j+1`, checked by enumeration.
    pub wrap_certificate: Vec<bool>,
    /// Whether the achieved modulus stays within `C * K^C * |A|`.
    pub budget_ok: bool,
    /// Doubling constant of the set inside the integers.
    pub doubling_z: crate::ratio::Rat,
    /// The translated image `A - min(A)` reduced mod `modulus`.
    pub image: Vec<u64>,
}

fn iterated_sumset_z(a: &[i64], m: u8) -> Vec<i64> {
    let mut cur: Vec<i64> = vec![0];
    for _ in 0..m {
        let mut next: Vec<i64> = cur
            .iter()
            .flat_map(|&s| a.iter().map(move |&x| s + x))
            .collect();
        next.sort_unstable();
        next.dedup();
        cur = next;
    }
    cur
}

fn no_wrap(diffs_pos: &[bool], n: u64) -> bool {
    // diffs_pos[d] marks d in (mA - mA); a wrap is a positive multiple of n.
    let mut mult = n as usize;
    while mult < diffs_pos.len() {
        if diffs_pos[mult] {
            return false;
        }
        mult += n as usize;
    }
    true
}

/// Embed an integer set into a cyclic group `Z/N` so that all sums of up to
/// `m` elements are preserved (no wrap-around on `mA - mA`). Returns the
/// always-admissible baseline `N = 2 m diam + 1` together with the smallest
/// admissible modulus located by exhaustive descending search, each order
/// certified by enumeration.
pub fn model_in_cyclic(
    a: &[i64],
    m: u8,
    budget_mult: f64,
    budget_exp: f64,
) -> Result<ModelingResult> {
    if a.is_empty() {
        return Err(Error::Argument("cannot model the empty set".into()));
    }
    if !(1..=4).contains(&m) {
        return Err(Error::Argument(format!(
            "modeling order must lie in 1..=4, got {m}"
        )));
    }
    let mut sorted: Vec<i64> = a.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let min = sorted[0];
    let shifted: Vec<i64> = sorted.iter().map(|&x| x - min).collect();
    let diam = *shifted.last().unwrap() as u64;
    let baseline = (2 * m as u64 * diam + 1).max(2);

    // Positive differences of the m-fold sumset, as a bitmap.
    let msums = iterated_sumset_z(&shifted, m);
    let mut diffs_pos = vec![false; (m as usize * diam as usize) + 1];
    for (i, &s) in msums.iter().enumerate() {
        for &t in &msums[..i] {
            diffs_pos[(s - t) as usize] = true;
        }
    }

    let lower = (shifted.len() as u64).max(2);
    let mut modulus = baseline;
    for n in (lower..=baseline).rev() {
        if no_wrap(&diffs_pos, n) {
            modulus = n;
        }
    }

    // Certify each order up to m at the chosen modulus by enumeration.
    let mut wrap_certificate = Vec::with_capacity(m as usize);
    for mp in 1..=m {
        let sums = iterated_sumset_z(&shifted, mp);
        let mut bitmap = vec![false; (mp as usize * diam as usize) + 1];
        for (i, &s) in sums.iter().enumerate() {
            for &t in &sums[..i] {
                bitmap[(s - t) as usize] = true;
            }
        }
        wrap_certificate.push(no_wrap(&bitmap, modulus));
    }

    let two = iterated_sumset_z(&shifted, 2);
    let doubling_z = crate::ratio::Rat::from_counts(two.len() as u128, shifted.len() as u128);
    let budget = budget_mult * doubling_z.to_f64().powf(budget_exp) * shifted.len() as f64;
    let budget_ok = (modulus as f64) <= budget;

    let image: Vec<u64> = {
        let mut v: Vec<u64> = shifted.iter().map(|&x| x as u64 % modulus).collect();
        v.sort_unstable();
        v.dedup();
        v
    };

    Ok(ModelingResult {
        baseline_n: baseline,
        modulus,
        order: m,
        wrap_certificate,
        budget_ok,
        doubling_z,
        image,
    })
}
