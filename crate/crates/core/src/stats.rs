//! Two-sample t tests on subjects-mode factor columns, with Bonferroni
//! adjustment across components.

use serde::Serialize;
use statrs::function::beta::beta_reg;

use crate::error::{domain, Result};
use crate::kruskal::FactorModel;
use crate::tensor::DenseMatrix;

pub const ALPHA: f64 = 0.05;

/// Group membership per subject, aligned with the first tensor mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupLabels {
    in_group1: Vec<bool>,
}

impl GroupLabels {
    /// `labels[i]` is 0 or 1.
    pub fn new(labels: &[u8]) -> Result<Self> {
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return domain(format!("group labels must be 0 or 1, got {bad}"));
        }
        let in_group1: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
        let n1 = in_group1.iter().filter(|&&g| g).count();
        if n1 == 0 || n1 == in_group1.len() {
            return domain("both groups must be nonempty");
        }
        Ok(Self { in_group1 })
    }

    /// First `n0` subjects in group 0, the next `n1` in group 1.
    pub fn from_counts(n0: usize, n1: usize) -> Result<Self> {
        let labels: Vec<u8> = std::iter::repeat_n(0, n0)
            .chain(std::iter::repeat_n(1, n1))
            .collect();
        Self::new(&labels)
    }

    pub fn len(&self) -> usize {
        self.in_group1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.in_group1.is_empty()
    }

    pub fn is_group1(&self, i: usize) -> bool {
        self.in_group1[i]
    }

    pub fn counts(&self) -> (usize, usize) {
        let n1 = self.in_group1.iter().filter(|&&g| g).count();
        (self.len() - n1, n1)
    }

    pub fn as_u8(&self) -> Vec<u8> {
        self.in_group1.iter().map(|&g| g as u8).collect()
    }

    /// Same subjects with the two groups exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            in_group1: self.in_group1.iter().map(|g| !g).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TTestKind {
    /// Student's test with pooled variance.
    #[default]
    Pooled,
    /// Welch's test with Satterthwaite degrees of freedom.
    Welch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTest {
    /// `(mean0 − mean1) / se`.
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p: f64,
}

/// Two-sided tail probability `P(|T| ≥ |t|)` of Student's t with `df`
/// degrees of freedom, via `I_{df/(df+t²)}(df/2, 1/2)`.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, ss / (n - 1.0))
}

pub fn two_sample_ttest(values: &[f64], labels: &GroupLabels, kind: TTestKind) -> Result<TTest> {
    if values.len() != labels.len() {
        return domain(format!(
            "{} values but {} labels",
            values.len(),
            labels.len()
        ));
    }
    let mut g0 = Vec::new();
    let mut g1 = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        if labels.is_group1(i) {
            g1.push(v)
        } else {
            g0.push(v)
        }
    }
    if g0.len() < 2 || g1.len() < 2 {
        return domain("each group needs at least two members");
    }
    let (n0, n1) = (g0.len() as f64, g1.len() as f64);
    let (m0, v0) = mean_var(&g0);
    let (m1, v1) = mean_var(&g1);
    if v0 == 0.0 && v1 == 0.0 {
        return domain("both groups have zero variance");
    }
    let (se, df) = match kind {
        TTestKind::Pooled => {
            let df = n0 + n1 - 2.0;
            let sp2 = ((n0 - 1.0) * v0 + (n1 - 1.0) * v1) / df;
            ((sp2 * (1.0 / n0 + 1.0 / n1)).sqrt(), df)
        }
        TTestKind::Welch => {
            let (a, b) = (v0 / n0, v1 / n1);
            let df = (a + b).powi(2) / (a * a / (n0 - 1.0) + b * b / (n1 - 1.0));
            ((a + b).sqrt(), df)
        }
    };
    let t = (m0 - m1) / se;
    Ok(TTest {
        t,
        df,
        p: student_t_two_sided_p(t, df),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentTest {
    pub component: usize,
    pub t: f64,
    pub df: f64,
    pub p: f64,
    /// `min(1, R·p)`.
    pub p_bonferroni: f64,
    pub significant: bool,
    pub significant_bonferroni: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentSignificance {
    pub kind: TTestKind,
    pub alpha: f64,
    pub components: Vec<ComponentTest>,
}

impl ComponentSignificance {
    /// Components significant after Bonferroni correction.
    pub fn bonferroni_significant(&self) -> Vec<usize> {
        self.components
            .iter()
            .filter(|c| c.significant_bonferroni)
            .map(|c| c.component)
            .collect()
    }
}

/// Tests each column of a subjects-by-components matrix.
pub fn significance_for_factor(
    subjects: &DenseMatrix,
    labels: &GroupLabels,
    kind: TTestKind,
) -> Result<ComponentSignificance> {
    if subjects.rows() != labels.len() {
        return domain(format!(
            "subjects factor has {} rows but {} labels were given",
            subjects.rows(),
            labels.len()
        ));
    }
    let r = subjects.cols() as f64;
    let components = (0..subjects.cols())
        .map(|c| {
            let tt = two_sample_ttest(subjects.col(c), labels, kind)?;
            let adj = (r * tt.p).min(1.0);
            Ok(ComponentTest {
                component: c,
                t: tt.t,
                df: tt.df,
                p: tt.p,
                p_bonferroni: adj,
                significant: tt.p < ALPHA,
                significant_bonferroni: adj < ALPHA,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComponentSignificance {
        kind,
        alpha: ALPHA,
        components,
    })
}

/// Tests the subjects-mode factor of a fitted model.
pub fn significance_report<M: FactorModel>(
    m: &M,
    labels: &GroupLabels,
    kind: TTestKind,
) -> Result<ComponentSignificance> {
    significance_for_factor(m.subject_factor(), labels, kind)
}
