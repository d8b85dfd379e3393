//! Densities over transform parameters, deterministic quadrature rules for
//! expectations, and seeded sampling.
//!
//! Sampling uses ChaCha8 (a counter-based generator with published
//! constants) so that sequences reproduce bit-exactly across platforms for
//! a recorded 64-bit seed. Gaussians are drawn with the Box-Muller
//! transform from two uniform draws.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::transform::Theta;

/// Density over a transform parameter.
///
/// `Product` pairs two scalar distributions for two-parameter transforms;
/// scalar variants serve one-parameter transforms. Use the constructors,
/// which validate the invariants (`std > 0`, `lo < hi`, product components
/// scalar).
#[derive(Debug, Clone, PartialEq)]
pub enum ParamDistribution<F> {
    Gaussian { mean: F, std: F },
    Uniform { lo: F, hi: F },
    Dirac { at: F },
    Product(Box<ParamDistribution<F>>, Box<ParamDistribution<F>>),
}

impl<F: Scalar> ParamDistribution<F> {
    pub fn gaussian(mean: F, std: F) -> Result<Self> {
        if !(std > F::zero()) || !mean.is_finite() || !std.is_finite() {
            return Err(Error::Argument(format!(
                "gaussian requires finite mean and std > 0, got ({mean}, {std})"
            )));
        }
        Ok(ParamDistribution::Gaussian { mean, std })
    }

    pub fn uniform(lo: F, hi: F) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Argument(format!(
                "uniform requires finite lo < hi, got ({lo}, {hi})"
            )));
        }
        Ok(ParamDistribution::Uniform { lo, hi })
    }

    pub fn dirac(at: F) -> Result<Self> {
        if !at.is_finite() {
            return Err(Error::Argument("dirac location must be finite".into()));
        }
        Ok(ParamDistribution::Dirac { at })
    }

    pub fn product(first: ParamDistribution<F>, second: ParamDistribution<F>) -> Result<Self> {
        if first.arity() != 1 || second.arity() != 1 {
            return Err(Error::Argument(
                "product components must be scalar distributions".into(),
            ));
        }
        Ok(ParamDistribution::Product(Box::new(first), Box::new(second)))
    }

    pub fn arity(&self) -> usize {
        match self {
            ParamDistribution::Product(_, _) => 2,
            _ => 1,
        }
    }

    /// Closed support of a scalar distribution (Gaussian truncated at
    /// six standard deviations; tail mass below 2e-9).
    pub fn support(&self) -> Result<(F, F)> {
        match self {
            ParamDistribution::Gaussian { mean, std } => {
                let six = F::of(6.0);
                Ok((*mean - six * *std, *mean + six * *std))
            }
            ParamDistribution::Uniform { lo, hi } => Ok((*lo, *hi)),
            ParamDistribution::Dirac { at } => Ok((*at, *at)),
            ParamDistribution::Product(_, _) => Err(Error::Argument(
                "support is defined per axis; destructure the product".into(),
            )),
        }
    }

    /// Pointwise density. Not defined for Dirac.
    pub fn density(&self, theta: &Theta<F>) -> Result<F> {
        match self {
            ParamDistribution::Gaussian { mean, std } => {
                let t = theta.scalar()?;
                let z = (t - *mean) / *std;
                let norm = *std * F::of((2.0 * std::f64::consts::PI).sqrt());
                Ok((-z * z * F::of(0.5)).exp() / norm)
            }
            ParamDistribution::Uniform { lo, hi } => {
                let t = theta.scalar()?;
                if t < *lo || t > *hi {
                    Ok(F::zero())
                } else {
                    Ok(F::one() / (*hi - *lo))
                }
            }
            ParamDistribution::Dirac { .. } => Err(Error::Unsupported(
                "the Dirac density is not a pointwise function".into(),
            )),
            ParamDistribution::Product(a, b) => {
                let (ta, tb) = theta.pair()?;
                Ok(a.density(&Theta::Scalar(ta))? * b.density(&Theta::Scalar(tb))?)
            }
        }
    }

    /// Deterministic quadrature rule with `n_nodes` Gauss-Legendre nodes
    /// per axis (tensor grid for products); weights absorb the density and
    /// are renormalized to sum to one.
    pub fn quadrature(&self, n_nodes: usize) -> Result<QuadratureRule<F>> {
        if n_nodes == 0 {
            return Err(Error::Argument("quadrature needs at least one node".into()));
        }
        match self {
            ParamDistribution::Product(a, b) => {
                let ra = a.scalar_rule(n_nodes, &[])?;
                let rb = b.scalar_rule(n_nodes, &[])?;
                Ok(QuadratureRule::tensor(&ra, &rb))
            }
            _ => {
                let r = self.scalar_rule(n_nodes, &[])?;
                Ok(QuadratureRule::from_scalar(r))
            }
        }
    }

    /// Scalar rule with `n_nodes` Gauss-Legendre points per panel; the
    /// support is split at the sorted `interior_edges` so integrands with
    /// kinks at known locations are integrated panel by panel.
    pub(crate) fn scalar_rule(
        &self,
        n_nodes: usize,
        interior_edges: &[F],
    ) -> Result<Vec<(F, F)>> {
        if let ParamDistribution::Dirac { at } = self {
            return Ok(vec![(*at, F::one())]);
        }
        let (lo, hi) = self.support()?;
        let mut edges = vec![lo];
        for &e in interior_edges {
            if e > lo && e < hi {
                edges.push(e);
            }
        }
        edges.push(hi);
        edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
        edges.dedup();
        let base = gauss_legendre_unit::<F>(n_nodes);
        let half = F::of(0.5);
        let mut rule = Vec::new();
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let mid = (a + b) * half;
            let rad = (b - a) * half;
            for &(x, w) in &base {
                let t = mid + rad * x;
                let p = self.density(&Theta::Scalar(t))?;
                rule.push((t, w * rad * p));
            }
        }
        let total: F = rule.iter().map(|&(_, w)| w).sum();
        if total <= F::zero() {
            return Err(Error::Numerical("quadrature weights sum to zero".into()));
        }
        for (_, w) in rule.iter_mut() {
            *w = *w / total;
        }
        Ok(rule)
    }

    /// One draw. Product components are drawn independently, first then
    /// second.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Theta<F> {
        match self {
            ParamDistribution::Gaussian { mean, std } => {
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen();
                let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                Theta::Scalar(*mean + *std * F::of(z))
            }
            ParamDistribution::Uniform { lo, hi } => {
                let u: f64 = rng.gen();
                Theta::Scalar(*lo + (*hi - *lo) * F::of(u))
            }
            ParamDistribution::Dirac { at } => Theta::Scalar(*at),
            ParamDistribution::Product(a, b) => {
                let ta = a.sample(rng).scalar().expect("product component is scalar");
                let tb = b.sample(rng).scalar().expect("product component is scalar");
                Theta::Pair(ta, tb)
            }
        }
    }

    /// Parses a distribution literal: `gauss(mu,sigma)`, `unif(lo,hi)`,
    /// `dirac(v)`, `prod(a,b)`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut p = Parser {
            text: text.trim(),
            pos: 0,
        };
        let d = p.dist()?;
        p.skip_ws();
        if p.pos != p.text.len() {
            return Err(Error::Argument(format!(
                "trailing input in distribution literal at byte {}",
                p.pos
            )));
        }
        Ok(d)
    }
}

/// Deterministic nodes/weights approximating E[g(theta)]; weights sum
/// to one.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<F> {
    nodes: Vec<(Theta<F>, F)>,
}

impl<F: Scalar> QuadratureRule<F> {
    pub fn nodes(&self) -> &[(Theta<F>, F)] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight_sum(&self) -> F {
        self.nodes.iter().map(|&(_, w)| w).sum()
    }

    pub fn arity(&self) -> usize {
        self.nodes.first().map(|(t, _)| t.arity()).unwrap_or(1)
    }

    /// E[g(theta)] under the rule, accumulated in node order.
    pub fn expect(&self, mut g: impl FnMut(&Theta<F>) -> F) -> F {
        self.nodes.iter().map(|(t, w)| *w * g(t)).sum()
    }

    pub(crate) fn from_scalar(rule: Vec<(F, F)>) -> Self {
        QuadratureRule {
            nodes: rule
                .into_iter()
                .map(|(t, w)| (Theta::Scalar(t), w))
                .collect(),
        }
    }

    pub(crate) fn tensor(a: &[(F, F)], b: &[(F, F)]) -> Self {
        let mut nodes = Vec::with_capacity(a.len() * b.len());
        for &(ta, wa) in a {
            for &(tb, wb) in b {
                nodes.push((Theta::Pair(ta, tb), wa * wb));
            }
        }
        QuadratureRule { nodes }
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1], Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre_unit<F: Scalar>(n: usize) -> Vec<(F, F)> {
    let mut out = vec![(F::zero(), F::zero()); n];
    let nf = n as f64;
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut x = F::of((std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos());
        let mut dp;
        loop {
            // evaluate P_n and P_n' at x via the three-term recurrence
            let mut p0 = F::one();
            let mut p1 = x;
            for k in 2..=n {
                let kf = F::of(k as f64);
                let p2 = ((F::of(2.0 * k as f64 - 1.0)) * x * p1
                    - (kf - F::one()) * p0)
                    / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { p0 } else { p1 };
            let pm1 = if n == 0 { F::zero() } else { p0 };
            dp = F::of(n as f64) * (x * p - pm1) / (x * x - F::one());
            let dx = p / dp;
            x = x - dx;
            if dx.abs() <= F::epsilon() * (F::one() + x.abs()) {
                break;
            }
        }
        let w = F::of(2.0) / ((F::one() - x * x) * dp * dp);
        out[i] = (-x, w);
        out[n - 1 - i] = (x, w);
    }
    if n % 2 == 1 {
        // force exact symmetry for the center node
        out[n / 2].0 = F::zero();
    }
    out
}

/// ChaCha8 generator seeded from a recorded 64-bit seed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream for parallel run `index`: seed + index.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(index))
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.text[self.pos..].starts_with(|c: char| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> Result<()> {
        self.skip_ws();
        if self.text[self.pos..].starts_with(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(Error::Argument(format!(
                "expected '{c}' at byte {} of distribution literal",
                self.pos
            )))
        }
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let rest = &self.text[self.pos..];
        let end = rest
            .char_indices()
            .take_while(|&(_, c)| {
                c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')
            })
            .last()
            .map(|(i, c)| i + c.len_utf8())
            .unwrap_or(0);
        let tok = &rest[..end];
        let v: f64 = tok
            .parse()
            .map_err(|_| Error::Argument(format!("bad number '{tok}' in distribution literal")))?;
        self.pos += end;
        Ok(v)
    }

    fn ident(&mut self) -> &'a str {
        self.skip_ws();
        let rest = &self.text[self.pos..];
        let end = rest
            .char_indices()
            .take_while(|&(_, c)| c.is_ascii_alphabetic())
            .last()
            .map(|(i, c)| i + c.len_utf8())
            .unwrap_or(0);
        self.pos += end;
        &rest[..end]
    }

    fn dist<F: Scalar>(&mut self) -> Result<ParamDistribution<F>> {
        let name = self.ident().to_string();
        self.eat('(')?;
        let d = match name.as_str() {
            "gauss" => {
                let mu = self.number()?;
                self.eat(',')?;
                let sigma = self.number()?;
                ParamDistribution::gaussian(F::of(mu), F::of(sigma))?
            }
            "unif" => {
                let lo = self.number()?;
                self.eat(',')?;
                let hi = self.number()?;
                ParamDistribution::uniform(F::of(lo), F::of(hi))?
            }
            "dirac" => ParamDistribution::dirac(F::of(self.number()?))?,
            "prod" => {
                let a = self.dist()?;
                self.eat(',')?;
                let b = self.dist()?;
                ParamDistribution::product(a, b)?
            }
            other => {
                return Err(Error::Argument(format!(
                    "unknown distribution '{other}' (expected gauss/unif/dirac/prod)"
                )))
            }
        };
        self.eat(')')?;
        Ok(d)
    }
}
