// SPDX-License-Identifier: MIT
//! Conditional-independence decisions from categorical sample data.
//!
//! The test is the likelihood-ratio (G-squared) statistic on the
//! contingency table of x and y stratified by each joint configuration of
//! the conditioning variables, referred to a chi-squared distribution.
//! The tail probability comes from a from-scratch regularized incomplete
//! gamma with relative error well under 1e-10.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndepError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("empty input: no header row")]
    EmptyFile,
    #[error("no data rows")]
    NoRows,
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("column {0:?} is constant; every variable needs at least two categories")]
    ConstantColumn(String),
    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),
    #[error("variable index {0} out of range")]
    UnknownVariable(usize),
    #[error("test endpoints must be distinct and outside the conditioning set")]
    InvalidQuery,
    #[error("alpha must lie strictly between 0 and 1")]
    InvalidAlpha,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    /// Category labels in first-appearance order; the cell value is the
    /// index into this list.
    pub categories: Vec<String>,
}

/// Immutable categorical sample matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    variables: Vec<Variable>,
    rows: Vec<Vec<u32>>,
}

impl Dataset {
    pub fn new(variables: Vec<Variable>, rows: Vec<Vec<u32>>) -> Result<Self, IndepError> {
        if variables.is_empty() {
            return Err(IndepError::EmptyFile);
        }
        let mut names = BTreeSet::new();
        for v in &variables {
            if !names.insert(v.name.clone()) {
                return Err(IndepError::DuplicateColumn(v.name.clone()));
            }
        }
        if rows.is_empty() {
            return Err(IndepError::NoRows);
        }
        for v in &variables {
            if v.categories.len() < 2 {
                return Err(IndepError::ConstantColumn(v.name.clone()));
            }
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != variables.len() {
                return Err(IndepError::Parse {
                    line: r + 2,
                    column: row.len() + 1,
                    message: "row length differs from header".into(),
                });
            }
            for (c, &cell) in row.iter().enumerate() {
                if cell as usize >= variables[c].categories.len() {
                    return Err(IndepError::Parse {
                        line: r + 2,
                        column: c + 1,
                        message: "category index out of range".into(),
                    });
                }
            }
        }
        Ok(Dataset { variables, rows })
    }

    /// Parses CSV text: a header of variable names, then one row of
    /// category strings per line. Categories are indexed in
    /// first-appearance order; constant columns are rejected.
    pub fn parse_csv(text: &str) -> Result<Self, IndepError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(IndepError::EmptyFile)?;
        if header.trim().is_empty() {
            return Err(IndepError::EmptyFile);
        }
        let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let mut variables: Vec<Variable> = names
            .iter()
            .map(|n| Variable {
                name: n.clone(),
                categories: Vec::new(),
            })
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').map(|s| s.trim()).collect();
            if cells.len() != names.len() {
                return Err(IndepError::Parse {
                    line: i + 1,
                    column: cells.len().min(names.len()) + 1,
                    message: format!("expected {} cells, found {}", names.len(), cells.len()),
                });
            }
            let mut row = Vec::with_capacity(cells.len());
            for (c, cell) in cells.iter().enumerate() {
                if cell.is_empty() {
                    return Err(IndepError::Parse {
                        line: i + 1,
                        column: c + 1,
                        message: "missing cell".into(),
                    });
                }
                let var = &mut variables[c];
                let idx = match var.categories.iter().position(|k| k == cell) {
                    Some(idx) => idx,
                    None => {
                        var.categories.push(cell.to_string());
                        var.categories.len() - 1
                    }
                };
                row.push(idx as u32);
            }
            rows.push(row);
        }
        Dataset::new(variables, rows)
    }

    pub fn load_csv(path: &Path) -> Result<Self, IndepError> {
        let text = std::fs::read_to_string(path).map_err(|e| IndepError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Dataset::parse_csv(&text)
    }

    #[inline]
    pub fn variable_count(&self) -> usize {
        self.variables.len()
    }

    #[inline]
    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn variable(&self, i: usize) -> &Variable {
        &self.variables[i]
    }

    pub fn variable_names(&self) -> Vec<String> {
        self.variables.iter().map(|v| v.name.clone()).collect()
    }
}

/// Result of one conditional-independence test.
#[derive(Debug, Clone, PartialEq)]
pub struct CiTestOutcome {
    pub independent: bool,
    pub p_value: f64,
    pub statistic: f64,
    pub degrees_of_freedom: u64,
    /// Set when the decision was forced to "independent" because the table
    /// had no usable degrees of freedom or too few rows per cell.
    pub low_power: bool,
}

/// G-squared conditional-independence test of `x ⫫ y | s` at level `alpha`.
/// Returns independent when the p-value exceeds `alpha`.
pub fn ci_test(
    data: &Dataset,
    x: usize,
    y: usize,
    s: &BTreeSet<usize>,
    alpha: f64,
) -> Result<CiTestOutcome, IndepError> {
    let m = data.variable_count();
    for &v in [x, y].iter().chain(s.iter()) {
        if v >= m {
            return Err(IndepError::UnknownVariable(v));
        }
    }
    if x == y || s.contains(&x) || s.contains(&y) {
        return Err(IndepError::InvalidQuery);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(IndepError::InvalidAlpha);
    }

    let nx = data.variables[x].categories.len();
    let ny = data.variables[y].categories.len();
    let cond: Vec<usize> = s.iter().copied().collect();

    // Stratum id = mixed-radix encoding of the conditioning configuration.
    let mut radix = 1usize;
    for &c in &cond {
        radix *= data.variables[c].categories.len();
    }
    let mut tables = vec![vec![0u64; nx * ny]; radix.max(1)];
    for row in &data.rows {
        let mut stratum = 0usize;
        for &c in &cond {
            stratum = stratum * data.variables[c].categories.len() + row[c] as usize;
        }
        tables[stratum][row[x] as usize * ny + row[y] as usize] += 1;
    }

    let mut statistic = 0.0f64;
    let mut dof = 0u64;
    for table in &tables {
        let total: u64 = table.iter().sum();
        if total == 0 {
            continue; // empty stratum: contributes nothing
        }
        dof += ((nx - 1) * (ny - 1)) as u64;
        let mut row_totals = vec![0u64; nx];
        let mut col_totals = vec![0u64; ny];
        for i in 0..nx {
            for j in 0..ny {
                row_totals[i] += table[i * ny + j];
                col_totals[j] += table[i * ny + j];
            }
        }
        for i in 0..nx {
            for j in 0..ny {
                let observed = table[i * ny + j];
                if observed == 0 {
                    continue;
                }
                let expected = row_totals[i] as f64 * col_totals[j] as f64 / total as f64;
                statistic += 2.0 * observed as f64 * (observed as f64 / expected).ln();
            }
        }
    }
    // ln-terms can leave a tiny negative residue on exact tables.
    if statistic < 0.0 && statistic > -1e-9 {
        statistic = 0.0;
    }

    if dof == 0 {
        return Ok(CiTestOutcome {
            independent: true,
            p_value: 1.0,
            statistic,
            degrees_of_freedom: 0,
            low_power: true,
        });
    }
    let p_value = chi_square_sf(statistic, dof as f64);
    if (data.row_count() as u64) < 10 * dof {
        return Ok(CiTestOutcome {
            independent: true,
            p_value,
            statistic,
            degrees_of_freedom: dof,
            low_power: true,
        });
    }
    Ok(CiTestOutcome {
        independent: p_value > alpha,
        p_value,
        statistic,
        degrees_of_freedom: dof,
        low_power: false,
    })
}

/// Audit line for one decision: `x ⫫ y | {s} : p-value`.
pub fn audit_line(data: &Dataset, x: usize, y: usize, s: &BTreeSet<usize>, p: f64) -> String {
    let mut out = String::new();
    let names: Vec<&str> = s.iter().map(|&i| data.variables[i].name.as_str()).collect();
    let _ = write!(
        out,
        "{} ⫫ {} | {{{}}} : {:.6e}",
        data.variables[x].name,
        data.variables[y].name,
        names.join(", "),
        p
    );
    out
}

/// Survival function of the chi-squared distribution: P(X > stat) with
/// `dof` degrees of freedom.
pub fn chi_square_sf(stat: f64, dof: f64) -> f64 {
    if stat <= 0.0 {
        return 1.0;
    }
    regularized_gamma_upper(dof / 2.0, stat / 2.0)
}

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
#[allow(clippy::excessive_precision)]
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection: Γ(x) Γ(1−x) = π / sin(πx)
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, &c) in COEFFS.iter().enumerate() {
        acc += c / (x + (i + 1) as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized upper incomplete gamma Q(a, x) = Γ(a, x) / Γ(a).
fn regularized_gamma_upper(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - lower_series(a, x)
    } else {
        upper_continued_fraction(a, x)
    }
}

/// Series expansion of P(a, x); converges fast for x < a + 1.
fn lower_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..500 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Modified Lentz continued fraction for Q(a, x); converges for x ≥ a + 1.
fn upper_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn binary_dataset(names: &[&str], cols: &[Vec<u32>]) -> Dataset {
        let variables = names
            .iter()
            .map(|n| Variable {
                name: n.to_string(),
                categories: vec!["0".into(), "1".into()],
            })
            .collect();
        let rows = (0..cols[0].len())
            .map(|r| cols.iter().map(|c| c[r]).collect())
            .collect();
        Dataset::new(variables, rows).unwrap()
    }

    #[test]
    fn csv_parse_roundtrip_basics() {
        let d = Dataset::parse_csv("a,b\n0,1\n1,0\n").unwrap();
        assert_eq!(d.variable_count(), 2);
        assert_eq!(d.row_count(), 2);
        assert_eq!(d.variable(0).name, "a");
        assert_eq!(d.variable(1).categories, vec!["1", "0"]);
    }

    #[test]
    fn csv_errors_carry_positions() {
        assert_eq!(Dataset::parse_csv(""), Err(IndepError::EmptyFile));
        assert!(matches!(
            Dataset::parse_csv("a,b\n0\n"),
            Err(IndepError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            Dataset::parse_csv("a,b\n0,\n"),
            Err(IndepError::Parse {
                line: 2,
                column: 2,
                ..
            })
        ));
        assert_eq!(
            Dataset::parse_csv("a,b\n0,0\n1,0\n"),
            Err(IndepError::ConstantColumn("b".into()))
        );
        assert_eq!(Dataset::parse_csv("a,b\n"), Err(IndepError::NoRows));
    }

    #[test]
    fn chi_square_sf_matches_closed_form_for_even_dof() {
        // For even dof k, P(X > x) = exp(-x/2) * sum_{i<k/2} (x/2)^i / i!.
        for k in [2u64, 4, 6, 8, 10, 20] {
            for &x in &[0.1, 0.5, 1.0, 2.5, 3.841, 7.0, 12.0, 19.5, 30.0, 55.0] {
                let mut sum = 0.0;
                let mut term = 1.0;
                for i in 0..(k / 2) {
                    if i > 0 {
                        term *= (x / 2.0) / i as f64;
                    }
                    sum += term;
                }
                let expected = (-x / 2.0).exp() * sum;
                let got = chi_square_sf(x, k as f64);
                assert!(
                    (got - expected).abs() <= 1e-10 * expected.max(1e-300),
                    "k={k} x={x}: got {got}, expected {expected}"
                );
            }
        }
    }

    #[test]
    fn chi_square_sf_known_quantiles_dof_one() {
        // 95th and 99th percentiles of chi-squared with one degree of
        // freedom (squares of the standard normal quantiles).
        let q95 = 3.841458820694124;
        let q99 = 6.634896601021213;
        assert!((chi_square_sf(q95, 1.0) - 0.05).abs() < 1e-10);
        assert!((chi_square_sf(q99, 1.0) - 0.01).abs() < 1e-10);
        assert!((chi_square_sf(0.0, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identical_columns_are_dependent() {
        let mut rng = SplitMix64::new(11);
        let col: Vec<u32> = (0..1000).map(|_| (rng.next_u64() & 1) as u32).collect();
        let d = binary_dataset(&["x", "y"], &[col.clone(), col]);
        let out = ci_test(&d, 0, 1, &BTreeSet::new(), 0.05).unwrap();
        assert!(!out.independent);
        assert!(out.p_value < 1e-10);
    }

    #[test]
    fn exact_product_table_scores_zero() {
        // Full enumeration of an exact product distribution: G² must be 0
        // and the test must accept independence.
        let rows = vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]];
        let variables = vec![
            Variable {
                name: "x".into(),
                categories: vec!["0".into(), "1".into()],
            },
            Variable {
                name: "y".into(),
                categories: vec!["0".into(), "1".into()],
            },
        ];
        // Replicate to clear the small-sample guard.
        let rows: Vec<Vec<u32>> = rows.into_iter().cycle().take(400).collect();
        let d = Dataset::new(variables, rows).unwrap();
        let out = ci_test(&d, 0, 1, &BTreeSet::new(), 0.05).unwrap();
        assert_eq!(out.statistic, 0.0);
        assert!(out.independent);
        assert!(!out.low_power);
    }

    #[test]
    fn exact_population_chain_table() {
        // Counts proportional to the exact joint of the forcing chain
        // A -> B -> C with P(B=A) = 0.9, P(C=B) = 0.9 and fair A:
        // conditioning on B makes A and C exactly independent.
        let mut rows = Vec::new();
        let counts: [(u32, u32, u32, usize); 8] = [
            (0, 0, 0, 810),
            (0, 0, 1, 90),
            (0, 1, 0, 10),
            (0, 1, 1, 90),
            (1, 0, 0, 90),
            (1, 0, 1, 10),
            (1, 1, 0, 90),
            (1, 1, 1, 810),
        ];
        for (a, b, c, count) in counts {
            for _ in 0..count {
                rows.push(vec![a, b, c]);
            }
        }
        let variables = ["A", "B", "C"]
            .iter()
            .map(|n| Variable {
                name: n.to_string(),
                categories: vec!["0".into(), "1".into()],
            })
            .collect();
        let d = Dataset::new(variables, rows).unwrap();

        let cond = ci_test(&d, 0, 2, &BTreeSet::from([1]), 0.05).unwrap();
        assert!(cond.statistic.abs() < 1e-9);
        assert!(cond.independent);
        assert_eq!(cond.degrees_of_freedom, 2);

        let marginal = ci_test(&d, 0, 2, &BTreeSet::new(), 0.05).unwrap();
        assert!(!marginal.independent);
        assert!(marginal.statistic > 100.0);
    }

    #[test]
    fn independent_columns_calibration() {
        // 100 seeded repetitions of two independently sampled fair binary
        // columns: the level-0.05 test must accept independence in at
        // least 90 of them.
        let mut accepted = 0;
        for seed in 0..100u64 {
            let mut rng = SplitMix64::new(1000 + seed);
            let a: Vec<u32> = (0..10_000).map(|_| (rng.next_u64() & 1) as u32).collect();
            let b: Vec<u32> = (0..10_000).map(|_| (rng.next_u64() & 1) as u32).collect();
            let d = binary_dataset(&["a", "b"], &[a, b]);
            if ci_test(&d, 0, 1, &BTreeSet::new(), 0.05)
                .unwrap()
                .independent
            {
                accepted += 1;
            }
        }
        assert!(accepted >= 90, "accepted only {accepted}/100");
    }

    #[test]
    fn query_validation() {
        let d = binary_dataset(&["a", "b"], &[vec![0, 1, 0, 1], vec![1, 0, 0, 1]]);
        assert_eq!(
            ci_test(&d, 0, 0, &BTreeSet::new(), 0.05),
            Err(IndepError::InvalidQuery)
        );
        assert_eq!(
            ci_test(&d, 0, 1, &BTreeSet::from([1]), 0.05),
            Err(IndepError::InvalidQuery)
        );
        assert_eq!(
            ci_test(&d, 0, 1, &BTreeSet::new(), 0.0),
            Err(IndepError::InvalidAlpha)
        );
        assert_eq!(
            ci_test(&d, 0, 5, &BTreeSet::new(), 0.05),
            Err(IndepError::UnknownVariable(5))
        );
    }

    #[test]
    fn small_sample_guard_returns_independent_with_flag() {
        let d = binary_dataset(&["a", "b"], &[vec![0, 1, 0], vec![1, 0, 0]]);
        let out = ci_test(&d, 0, 1, &BTreeSet::new(), 0.05).unwrap();
        assert!(out.independent);
        assert!(out.low_power);
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = SplitMix64::new(5);
        let a: Vec<u32> = (0..500).map(|_| (rng.next_u64() & 1) as u32).collect();
        let b: Vec<u32> = a
            .iter()
            .map(|&v| if rng.next_f64() < 0.8 { v } else { 1 - v })
            .collect();
        let c: Vec<u32> = (0..500).map(|_| (rng.next_u64() & 1) as u32).collect();
        let d1 = binary_dataset(&["a", "b", "c"], &[a.clone(), b.clone(), c.clone()]);

        let mut order: Vec<usize> = (0..500).collect();
        rng.shuffle(&mut order);
        let perm = |col: &Vec<u32>| -> Vec<u32> { order.iter().map(|&i| col[i]).collect() };
        let d2 = binary_dataset(&["a", "b", "c"], &[perm(&a), perm(&b), perm(&c)]);

        for (x, y, s) in [
            (0usize, 1usize, BTreeSet::new()),
            (0, 2, BTreeSet::new()),
            (0, 1, BTreeSet::from([2])),
            (1, 2, BTreeSet::from([0])),
        ] {
            let r1 = ci_test(&d1, x, y, &s, 0.05).unwrap();
            let r2 = ci_test(&d2, x, y, &s, 0.05).unwrap();
            assert_eq!(r1.independent, r2.independent);
            assert!((r1.statistic - r2.statistic).abs() < 1e-9);
        }
    }

    #[test]
    fn symmetry_in_arguments() {
        let mut rng = SplitMix64::new(9);
        let a: Vec<u32> = (0..400).map(|_| (rng.next_u64() & 1) as u32).collect();
        let b: Vec<u32> = a
            .iter()
            .map(|&v| if rng.next_f64() < 0.7 { v } else { 1 - v })
            .collect();
        let d = binary_dataset(&["a", "b"], &[a, b]);
        let xy = ci_test(&d, 0, 1, &BTreeSet::new(), 0.05).unwrap();
        let yx = ci_test(&d, 1, 0, &BTreeSet::new(), 0.05).unwrap();
        assert_eq!(xy.independent, yx.independent);
        assert!((xy.statistic - yx.statistic).abs() < 1e-9);
    }

    #[test]
    fn audit_line_format() {
        let d = binary_dataset(&["a", "b", "c"], &[vec![0, 1], vec![1, 0], vec![0, 1]]);
        let line = audit_line(&d, 0, 1, &BTreeSet::from([2]), 0.5);
        assert_eq!(line, "a ⫫ b | {c} : 5.000000e-1");
    }
}
