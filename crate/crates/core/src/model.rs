//! The offspring law: a vector of probability generating functions.
//!
//! Each type carries either a finite table of offspring probabilities or a
//! rational generating function `num / den`. Rational types are usable
//! anywhere only evaluation is needed; the series machinery rejects them.

use crate::error::{Condition, Error, Result};
use crate::multi_index::MultiIndex;
use crate::poly::{Poly, PowerTable};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

/// Residual up to which a per-type probability sum is silently repaired.
pub const NORMALIZATION_REPAIR_TOL: f64 = 1e-12;
/// Denominators smaller than this are treated as poles.
pub const POLE_TOL: f64 = 1e-14;
/// Highest degree of Taylor expansion produced for rational types.
pub const RATIONAL_SERIES_MAX_DEGREE: u32 = 64;
/// Degree up to which rational types are checked for nonnegative coefficients.
const RATIONAL_CHECK_DEGREE: u32 = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct RationalForm {
    pub num: Poly,
    pub den: Poly,
}

#[derive(Debug, Clone)]
pub struct PgfModel {
    n: usize,
    /// Offspring probabilities per type. For a rational type this is the
    /// optional finite table used only for simulation (possibly empty).
    terms: Vec<Poly>,
    rational: Vec<Option<RationalForm>>,
    margin: f64,
}

/// Scratch buffers for allocation-free evaluation in hot loops.
#[derive(Debug, Default, Clone)]
pub struct EvalScratch {
    table: PowerTable,
}

/// Value of a higher-order Taylor remainder: `num(y) / den(y)`.
#[derive(Debug, Clone)]
pub struct Remainder {
    pub num: Poly,
    pub den: Option<Poly>,
}

impl Remainder {
    pub fn eval_with(&self, y: &[Complex64], table: &mut PowerTable) -> Result<Complex64> {
        let n = self.num.eval_with(y, table);
        match &self.den {
            None => Ok(n),
            Some(d) => {
                let dv = d.eval_with(y, table);
                if dv.norm() < POLE_TOL {
                    return Err(Error::numeric("rational denominator vanishes"));
                }
                Ok(n / dv)
            }
        }
    }
}

/// First-order part plus remainder of the law at a base point:
/// `P(1 - y) = 1 - E y + P1(y)` at one, `P(y) = M y + Q1(y)` at zero.
#[derive(Debug, Clone)]
pub struct LocalExpansion {
    pub linear: DMatrix<f64>,
    pub higher: Vec<Remainder>,
}

impl LocalExpansion {
    pub fn n(&self) -> usize {
        self.higher.len()
    }

    /// Remainder vector at `y`, written into `out`.
    pub fn eval_higher_into(
        &self,
        y: &[Complex64],
        out: &mut [Complex64],
        scratch: &mut EvalScratch,
    ) -> Result<()> {
        for (o, r) in out.iter_mut().zip(&self.higher) {
            *o = r.eval_with(y, &mut scratch.table)?;
        }
        Ok(())
    }

    pub fn eval_higher(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::default(); self.n()];
        self.eval_higher_into(y, &mut out, &mut EvalScratch::default())?;
        Ok(out)
    }

    /// True when every remainder is a plain polynomial.
    pub fn is_polynomial(&self) -> bool {
        self.higher.iter().all(|r| r.den.is_none())
    }
}

impl PgfModel {
    /// Validates and builds a model. `terms[i]` are the offspring
    /// probabilities of type `i`; `rational[i]`, when present, overrides
    /// them for evaluation.
    pub fn new(
        terms: Vec<Poly>,
        rational: Vec<Option<RationalForm>>,
        margin: f64,
    ) -> Result<Self> {
        let n = terms.len();
        if n == 0 {
            return Err(Error::Parse("model has no types".into()));
        }
        if rational.len() != n {
            return Err(Error::Parse("rational list length differs from N".into()));
        }
        if !(margin > 0.0 && margin.is_finite()) {
            return Err(Error::Parse(format!("margin must be positive, got {margin}")));
        }
        let mut fixed = Vec::with_capacity(n);
        for (i, (t, r)) in terms.into_iter().zip(&rational).enumerate() {
            if t.n_vars() != n {
                return Err(Error::Parse(format!("type {}: exponent length != N", i + 1)));
            }
            match r {
                None => fixed.push(validate_table(i, t, true)?),
                Some(rf) => {
                    validate_rational(i, n, rf)?;
                    if t.is_zero() {
                        fixed.push(t);
                    } else {
                        fixed.push(validate_table(i, t, false)?);
                    }
                }
            }
        }
        Ok(PgfModel {
            n,
            terms: fixed,
            rational,
            margin,
        })
    }

    /// Polynomial model from per-type coefficient tables.
    pub fn polynomial(terms: Vec<Poly>) -> Result<Self> {
        let n = terms.len();
        Self::new(terms, vec![None; n], 1.0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    /// Offspring table of type `i` (empty for a rational type without one).
    pub fn terms(&self, i: usize) -> &Poly {
        &self.terms[i]
    }

    pub fn rational(&self, i: usize) -> Option<&RationalForm> {
        self.rational[i].as_ref()
    }

    pub fn is_rational(&self) -> bool {
        self.rational.iter().any(Option::is_some)
    }

    pub fn ensure_polynomial(&self, what: &'static str) -> Result<()> {
        if self.is_rational() {
            Err(Error::RationalUnsupported(what))
        } else {
            Ok(())
        }
    }

    /// `P(z)`, written into `out`.
    pub fn eval_into(
        &self,
        z: &[Complex64],
        out: &mut [Complex64],
        scratch: &mut EvalScratch,
    ) -> Result<()> {
        for i in 0..self.n {
            out[i] = match &self.rational[i] {
                None => self.terms[i].eval_with(z, &mut scratch.table),
                Some(rf) => {
                    let d = rf.den.eval_with(z, &mut scratch.table);
                    if d.norm() < POLE_TOL {
                        return Err(Error::numeric(format!(
                            "denominator of type {} vanishes",
                            i + 1
                        )));
                    }
                    rf.num.eval_with(z, &mut scratch.table) / d
                }
            };
        }
        Ok(())
    }

    pub fn eval(&self, z: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::default(); self.n];
        self.eval_into(z, &mut out, &mut EvalScratch::default())?;
        Ok(out)
    }

    /// Taylor polynomial of type `i` at the origin up to `degree`.
    pub fn taylor_series(&self, i: usize, degree: u32) -> Result<Poly> {
        match &self.rational[i] {
            None => Ok(self.terms[i].truncated(degree)),
            Some(rf) => {
                if degree > RATIONAL_SERIES_MAX_DEGREE {
                    return Err(Error::Domain(format!(
                        "rational expansion limited to degree {RATIONAL_SERIES_MAX_DEGREE}"
                    )));
                }
                Poly::series_quotient(&rf.num, &rf.den, degree)
                    .ok_or_else(|| Error::numeric("denominator vanishes at the origin"))
            }
        }
    }

    /// Expansion at the all-ones vector: mean matrix and remainder `P1`.
    pub fn expansion_at_one(&self) -> LocalExpansion {
        self.expansion(true)
    }

    /// Expansion at the origin: linear part `M` and remainder `Q1`.
    pub fn expansion_at_zero(&self) -> LocalExpansion {
        self.expansion(false)
    }

    fn expansion(&self, at_one: bool) -> LocalExpansion {
        let n = self.n;
        let shift = |p: &Poly| if at_one { p.shifted_to_one() } else { p.clone() };
        // the linear coefficients of P(1 - y) are -E
        let sign = if at_one { -1.0 } else { 1.0 };
        let mut linear = DMatrix::zeros(n, n);
        let mut higher = Vec::with_capacity(n);
        for i in 0..n {
            match &self.rational[i] {
                None => {
                    let s = shift(&self.terms[i]);
                    for (j, c) in s.linear_part().into_iter().enumerate() {
                        linear[(i, j)] = sign * c;
                    }
                    higher.push(Remainder {
                        num: s.without_degree_at_most(1),
                        den: None,
                    });
                }
                Some(rf) => {
                    let num = shift(&rf.num);
                    let den = shift(&rf.den);
                    let d0 = den.constant_term();
                    let c0 = num.constant_term() / d0;
                    let nl = num.linear_part();
                    let dl = den.linear_part();
                    let row: Vec<f64> = (0..n).map(|j| (nl[j] - c0 * dl[j]) / d0).collect();
                    for (j, &c) in row.iter().enumerate() {
                        linear[(i, j)] = sign * c;
                    }
                    // num - (base + linear) * den has no terms of degree <= 1
                    // in exact arithmetic
                    let base = if at_one {
                        Poly::constant(n, 1.0)
                    } else {
                        Poly::zero(n)
                    };
                    let r = num.sub(&base.add(&Poly::linear(&row)).mul(&den));
                    higher.push(Remainder {
                        num: r.without_degree_at_most(1),
                        den: Some(den),
                    });
                }
            }
        }
        LocalExpansion { linear, higher }
    }

    pub fn mean_matrix(&self) -> DMatrix<f64> {
        self.expansion_at_one().linear
    }

    pub fn linear_part_at_zero(&self) -> DMatrix<f64> {
        self.expansion_at_zero().linear
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        file.into_model()
    }

    pub fn to_json_string(&self) -> String {
        let file = ModelFile::from_model(self);
        serde_json::to_string_pretty(&file).expect("model serialises")
    }
}

/// Reads and validates a model file.
pub fn load_model(path: impl AsRef<Path>) -> Result<PgfModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    PgfModel::from_json_str(&text)
}

fn validate_table(i: usize, t: Poly, need_nonlinear: bool) -> Result<Poly> {
    let ty = i + 1;
    let n = t.n_vars();
    if t.is_zero() {
        return Err(Error::validation(
            Condition::Normalization,
            format!("type {ty} has no offspring terms"),
        ));
    }
    for (k, c) in t.terms() {
        if !(c.is_finite() && *c >= 0.0) {
            return Err(Error::validation(
                Condition::A,
                format!("p_{ty}{k} = {c} is not a probability"),
            ));
        }
    }
    let p0 = t.constant_term();
    if p0 != 0.0 {
        return Err(Error::validation(
            Condition::A,
            format!("Schröder condition violated: p_{ty}(0) = {p0}"),
        ));
    }
    let s = t.coefficient_sum();
    let residual = s - 1.0;
    if residual.abs() > NORMALIZATION_REPAIR_TOL {
        return Err(Error::validation(
            Condition::Normalization,
            format!("probabilities of type {ty} sum to {s}"),
        ));
    }
    let t = if residual != 0.0 {
        // put the rounding residual on the largest coefficient
        let (kmax, _) = t
            .terms()
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .cloned()
            .expect("nonempty");
        let terms = t
            .terms()
            .iter()
            .map(|(k, c)| (k.clone(), if *k == kmax { c - residual } else { *c }));
        Poly::from_terms(n, terms)
    } else {
        t
    };
    for (k, c) in t.terms() {
        if *c >= 1.0 {
            return Err(Error::validation(
                Condition::A,
                format!("degenerate law: p_{ty}{k} = {c}"),
            ));
        }
    }
    if need_nonlinear && t.degree() < 2 {
        return Err(Error::validation(
            Condition::A,
            format!("nonlinearity violated: P_{ty} is linear"),
        ));
    }
    Ok(t)
}

fn validate_rational(i: usize, n: usize, rf: &RationalForm) -> Result<()> {
    let ty = i + 1;
    if rf.num.n_vars() != n || rf.den.n_vars() != n {
        return Err(Error::Parse(format!("type {ty}: rational exponent length != N")));
    }
    let d0 = rf.den.constant_term();
    if d0 == 0.0 {
        return Err(Error::validation(
            Condition::A,
            format!("denominator of type {ty} vanishes at the origin"),
        ));
    }
    let dominance: f64 = rf
        .den
        .terms()
        .iter()
        .filter(|(k, _)| k.degree() > 0)
        .map(|(_, c)| c.abs())
        .sum();
    if dominance >= d0.abs() {
        return Err(Error::validation(
            Condition::A,
            format!(
                "denominator of type {ty} is not dominated by its constant term; \
                 cannot certify it is zero-free on the closed unit polydisc"
            ),
        ));
    }
    if rf.num.constant_term() != 0.0 {
        return Err(Error::validation(
            Condition::A,
            format!("Schröder condition violated: P_{ty}(0) != 0"),
        ));
    }
    let at_one = rf.num.coefficient_sum() / rf.den.coefficient_sum();
    if (at_one - 1.0).abs() > NORMALIZATION_REPAIR_TOL {
        return Err(Error::validation(
            Condition::Normalization,
            format!("P_{ty}(1) = {at_one}"),
        ));
    }
    let series = Poly::series_quotient(&rf.num, &rf.den, RATIONAL_CHECK_DEGREE)
        .expect("d0 != 0 checked above");
    for (k, c) in series.terms() {
        if *c < -1e-12 {
            return Err(Error::validation(
                Condition::A,
                format!("Taylor coefficient {k} of type {ty} is negative ({c})"),
            ));
        }
        if *c >= 1.0 {
            return Err(Error::validation(
                Condition::A,
                format!("degenerate law: p_{ty}{k} = {c}"),
            ));
        }
    }
    if !series.terms().iter().any(|(k, c)| k.degree() >= 2 && *c > 1e-15) {
        return Err(Error::validation(
            Condition::A,
            format!("nonlinearity violated: P_{ty} is linear"),
        ));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    #[serde(rename = "N")]
    n: usize,
    types: Vec<TypeFile>,
    #[serde(default = "default_margin")]
    margin: f64,
}

fn default_margin() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TypeFile {
    #[serde(default)]
    terms: Vec<TermFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rational: Option<RationalFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RationalFile {
    num: Vec<TermFile>,
    den: Vec<TermFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermFile {
    k: Vec<u32>,
    p: String,
}

/// Parses a decimal string, also accepting a simple fraction `a/b`.
pub fn parse_decimal(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a decimal number: {s:?}"));
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            if b == 0.0 {
                return Err(bad());
            }
            a / b
        }
        None => s.parse().map_err(|_| bad())?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

fn terms_to_poly(n: usize, terms: &[TermFile], what: &str) -> Result<Poly> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(terms.len());
    for t in terms {
        if t.k.len() != n {
            return Err(Error::Parse(format!(
                "{what}: exponent {:?} has length {}, expected {n}",
                t.k,
                t.k.len()
            )));
        }
        if !seen.insert(t.k.clone()) {
            return Err(Error::Parse(format!("{what}: duplicate exponent {:?}", t.k)));
        }
        out.push((MultiIndex::new(t.k.clone()), parse_decimal(&t.p)?));
    }
    Ok(Poly::from_terms(n, out))
}

fn poly_to_terms(p: &Poly) -> Vec<TermFile> {
    p.terms()
        .iter()
        .map(|(k, c)| TermFile {
            k: k.entries().to_vec(),
            p: format!("{c:?}"),
        })
        .collect()
}

impl ModelFile {
    fn into_model(self) -> Result<PgfModel> {
        let n = self.n;
        if self.types.len() != n {
            return Err(Error::Parse(format!(
                "N = {n} but {} types given",
                self.types.len()
            )));
        }
        let mut terms = Vec::with_capacity(n);
        let mut rational = Vec::with_capacity(n);
        for (i, t) in self.types.iter().enumerate() {
            let what = format!("type {}", i + 1);
            terms.push(terms_to_poly(n, &t.terms, &what)?);
            rational.push(match &t.rational {
                None => None,
                Some(r) => Some(RationalForm {
                    num: terms_to_poly(n, &r.num, &format!("{what} numerator"))?,
                    den: terms_to_poly(n, &r.den, &format!("{what} denominator"))?,
                }),
            });
        }
        PgfModel::new(terms, rational, self.margin)
    }

    fn from_model(m: &PgfModel) -> Self {
        ModelFile {
            n: m.n,
            types: (0..m.n)
                .map(|i| TypeFile {
                    terms: poly_to_terms(&m.terms[i]),
                    rational: m.rational[i].as_ref().map(|r| RationalFile {
                        num: poly_to_terms(&r.num),
                        den: poly_to_terms(&r.den),
                    }),
                })
                .collect(),
            margin: m.margin,
        }
    }
}
