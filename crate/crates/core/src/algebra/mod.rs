//! Finitely presented algebras, matrix representations and representative
//! dynamics.
//!
//! A state is a tuple of complex `n × n` matrices that must stay the images
//! of the generators of an algebra drawn from a class. Relations are checked
//! with ordinary products; dynamics symbols are evaluated with Weyl
//! (symmetric) ordering.

mod inverse;
mod ncpoly;
mod repdyn;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{config, Error, Result};

pub use inverse::{solve_inverse_problem, InverseOptions, InverseProblem, InverseSolution, InverseVerification};
pub use ncpoly::{Letter, NcPoly, Word};
pub use repdyn::{
    integrate_repdyn, run_tactical_repdyn, ClassDynamics, ControlSchedule, RepDynSpec, RepDynTrajectory, SymbolTerm,
    TacticalRepDyn, TacticalRepDynRun, TransitionEvent, DEFAULT_MAX_CORRECTION, DEFAULT_MAX_ITERATIONS,
    DEFAULT_TOLERANCE,
};

pub type CMatrix = DMatrix<Complex64>;

/// Generator count cap.
pub const MAX_GENERATORS: usize = 4;
/// Matrix dimension cap.
pub const MAX_DIMENSION: usize = 6;
/// Symbol and relation degree cap.
pub const MAX_DEGREE: usize = 3;

/// Ordered generator images at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixTuple {
    pub time: f64,
    pub matrices: Vec<CMatrix>,
}

impl MatrixTuple {
    pub fn new(time: f64, matrices: Vec<CMatrix>) -> Result<Self> {
        check_tuple(&matrices)?;
        Ok(MatrixTuple { time, matrices })
    }

    pub fn dim(&self) -> usize {
        self.matrices.first().map_or(0, |m| m.nrows())
    }
}

pub(crate) fn check_tuple(matrices: &[CMatrix]) -> Result<()> {
    let n = matrices.first().map_or(0, |m| m.nrows());
    if matrices.iter().any(|m| m.nrows() != n || m.ncols() != n) {
        return Err(config("matrix tuple entries must be square and share one dimension"));
    }
    if n > MAX_DIMENSION {
        return Err(config(format!("matrix dimension {n} exceeds the cap {MAX_DIMENSION}")));
    }
    if matrices.iter().any(|m| m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
        return Err(config("matrix tuple has non-finite entries"));
    }
    Ok(())
}

/// `n × n` matrix unit `E_{ij}` (1-based).
pub fn unit(n: usize, i: usize, j: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    m[(i - 1, j - 1)] = Complex64::new(1.0, 0.0);
    m
}

/// Real diagonal matrix.
pub fn diag(values: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        values.len(),
        values.iter().map(|&v| Complex64::new(v, 0.0)),
    ))
}

fn letter<'a>(l: Letter, xs: &'a [CMatrix], cs: &'a [CMatrix]) -> &'a CMatrix {
    match l {
        Letter::X(i) => &xs[i],
        Letter::C(i) => &cs[i],
    }
}

/// Ordinary product of a word, identity for the empty word.
pub fn word_product(word: &[Letter], xs: &[CMatrix], cs: &[CMatrix], n: usize) -> CMatrix {
    let mut it = word.iter();
    let Some(&first) = it.next() else {
        return CMatrix::identity(n, n);
    };
    let mut acc = letter(first, xs, cs).clone();
    for &l in it {
        acc = &acc * letter(l, xs, cs);
    }
    acc
}

/// Next permutation in lexicographic order; false after the last one.
fn next_permutation(p: &mut [Letter]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let Some(i) = (0..p.len() - 1).rev().find(|&i| p[i] < p[i + 1]) else {
        return false;
    };
    let j = (i + 1..p.len()).rev().find(|&j| p[j] > p[i]).unwrap();
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}

/// Symmetrized product of a word: the mean of the products over all `d!`
/// orderings of its letters. The letters are sorted first and orderings are
/// summed in a fixed sequence, so the result depends only on the multiset.
pub fn weyl_word(word: &[Letter], xs: &[CMatrix], cs: &[CMatrix], n: usize) -> CMatrix {
    if word.len() < 2 {
        return word_product(word, xs, cs, n);
    }
    let mut p = word.to_vec();
    p.sort();
    let counts: Vec<usize> = {
        let mut c = Vec::new();
        let mut k = 0;
        while k < p.len() {
            let run = p[k..].iter().take_while(|&&l| l == p[k]).count();
            c.push(run);
            k += run;
        }
        c
    };
    // Each distinct arrangement stands for ∏ (multiplicity!) of the d! orderings.
    let weight: f64 = counts.iter().map(|&m| (1..=m).product::<usize>() as f64).product();
    let total: f64 = (1..=p.len()).product::<usize>() as f64;
    let mut acc = CMatrix::zeros(n, n);
    loop {
        acc += word_product(&p, xs, cs, n);
        if !next_permutation(&mut p) {
            break;
        }
    }
    acc * Complex64::new(weight / total, 0.0)
}

/// Weyl evaluation of a symbol at `xs`, with lifted constants `cs`.
pub fn weyl_eval(poly: &NcPoly, xs: &[CMatrix], cs: &[CMatrix]) -> Result<CMatrix> {
    check_letters(poly, xs.len(), cs.len())?;
    let n = xs.first().or(cs.first()).map_or(0, |m| m.nrows());
    let mut acc = CMatrix::zeros(n, n);
    for (c, w) in &poly.terms {
        acc += weyl_word(w, xs, cs, n) * *c;
    }
    if acc.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Data("Weyl evaluation overflowed".into()));
    }
    Ok(acc)
}

fn check_letters(poly: &NcPoly, m: usize, k: usize) -> Result<()> {
    if poly.max_generator() > m {
        return Err(config(format!(
            "`{}` uses x{} but only {m} generators are present",
            poly.source,
            poly.max_generator()
        )));
    }
    if poly.max_constant() > k {
        return Err(config(format!(
            "`{}` uses c{} but only {k} constant matrices are lifted",
            poly.source,
            poly.max_constant()
        )));
    }
    Ok(())
}

/// Relations evaluated with ordinary (non-symmetrized) products.
pub fn relation_value(rel: &NcPoly, xs: &[CMatrix], n: usize) -> CMatrix {
    let mut acc = CMatrix::zeros(n, n);
    for (c, w) in &rel.terms {
        acc += word_product(w, xs, &[], n) * *c;
    }
    acc
}

/// A finitely presented algebra: `m` generators subject to relations.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraPresentation {
    pub label: String,
    pub generators: usize,
    pub relations: Vec<NcPoly>,
}

impl AlgebraPresentation {
    pub fn parse(label: &str, generators: usize, relations: &[&str]) -> Result<Self> {
        let p = AlgebraPresentation {
            label: label.to_string(),
            generators,
            relations: relations.iter().map(|r| NcPoly::parse(r)).collect::<Result<_>>()?,
        };
        p.validate()?;
        Ok(p)
    }

    /// All commutators `x_i x_j − x_j x_i`, `i < j`.
    pub fn commutative(label: &str, generators: usize) -> Self {
        let mut relations = Vec::new();
        for i in 0..generators {
            for j in i + 1..generators {
                relations.push(NcPoly::from_terms(vec![
                    (Complex64::new(1.0, 0.0), vec![Letter::X(i), Letter::X(j)]),
                    (Complex64::new(-1.0, 0.0), vec![Letter::X(j), Letter::X(i)]),
                ]));
            }
        }
        AlgebraPresentation {
            label: label.to_string(),
            generators,
            relations,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.generators == 0 || self.generators > MAX_GENERATORS {
            return Err(config(format!(
                "presentation `{}` has {} generators; 1..={MAX_GENERATORS} are supported",
                self.label, self.generators
            )));
        }
        for r in &self.relations {
            check_letters(r, self.generators, 0)?;
            if r.degree() > MAX_DEGREE {
                return Err(config(format!("relation `{}` exceeds degree {MAX_DEGREE}", r.source)));
            }
        }
        Ok(())
    }
}

/// Max Frobenius norm over relations; zero for an empty relation list.
pub fn relation_residual(pres: &AlgebraPresentation, xs: &[CMatrix]) -> Result<f64> {
    if xs.len() != pres.generators {
        return Err(config(format!(
            "presentation `{}` has {} generators but the tuple has {} matrices",
            pres.label,
            pres.generators,
            xs.len()
        )));
    }
    let n = xs.first().map_or(0, |m| m.nrows());
    Ok(pres
        .relations
        .iter()
        .map(|r| relation_value(r, xs, n).norm())
        .fold(0.0, f64::max))
}

/// Whether `xs` satisfies the relations within `tol`.
pub fn admissible_check(pres: &AlgebraPresentation, xs: &[CMatrix], tol: f64) -> Result<bool> {
    Ok(relation_residual(pres, xs)? <= tol)
}

/// A named family of presentations.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraClass {
    pub label: String,
    pub presentations: Vec<AlgebraPresentation>,
}

impl AlgebraClass {
    /// Member constraining tuples with `m` generators.
    pub fn presentation_for(&self, m: usize) -> Option<&AlgebraPresentation> {
        self.presentations.iter().find(|p| p.generators == m)
    }
}

/// Registry of algebra classes, in transition-search order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlgebraClassRegistry {
    pub classes: Vec<AlgebraClass>,
}

impl AlgebraClassRegistry {
    pub fn new(classes: Vec<AlgebraClass>) -> Result<Self> {
        let r = AlgebraClassRegistry { classes };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.classes.iter().enumerate() {
            if self.classes[..i].iter().any(|d| d.label == c.label) {
                return Err(config(format!("class label `{}` is declared twice", c.label)));
            }
            if c.presentations.is_empty() {
                return Err(config(format!("class `{}` has no presentations", c.label)));
            }
            for p in &c.presentations {
                p.validate()?;
            }
        }
        Ok(())
    }

    pub fn get(&self, label: &str) -> Option<&AlgebraClass> {
        self.classes.iter().find(|c| c.label == label)
    }

    pub fn labels(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.label.clone()).collect()
    }
}

/// Maximal interval on which the class label is constant; closed-open
/// except the last, which ends at the final sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassInterval {
    pub label: String,
    pub start: f64,
    pub end: f64,
}

/// Merge adjacent samples with equal labels. Equivalence is label equality.
pub fn equivalence_partition(times: &[f64], labels: &[Option<String>]) -> Result<Vec<ClassInterval>> {
    if times.len() != labels.len() || times.is_empty() {
        return Err(Error::Data("times and labels must be nonempty and of equal length".into()));
    }
    let mut out: Vec<ClassInterval> = Vec::new();
    for (k, (t, l)) in times.iter().zip(labels).enumerate() {
        let l = l
            .as_ref()
            .ok_or_else(|| Error::Data(format!("sample {k} at t = {t} carries no class label")))?;
        match out.last_mut() {
            Some(last) if &last.label == l => {}
            _ => {
                if let Some(last) = out.last_mut() {
                    last.end = *t;
                }
                out.push(ClassInterval {
                    label: l.clone(),
                    start: *t,
                    end: *t,
                });
            }
        }
    }
    out.last_mut().unwrap().end = *times.last().unwrap();
    Ok(out)
}

#[cfg(test)]
mod tests;
