use std::fmt::Write as _;
use std::io::Write;

/// Per-term breakdown of the training objective.
///
/// The first five terms are the relaxed objective; `theta_reg = λ‖θ‖²` is the
/// smoothness penalty of the view-weight step, included so that every block
/// update is an exact minimization of [`ObjectiveTerms::total`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveTerms {
    /// `Tr(Fᵀ L F)`
    pub laplacian: f64,
    /// `Tr[(F − Y)ᵀ U (F − Y)]`
    pub label_fit: f64,
    /// `Σ θ_v ‖T_v F − X_v Q_v W‖²`
    pub view_fit: f64,
    /// `β ‖W‖²`
    pub w_reg: f64,
    /// `γ ‖M₁ X₁ Q₁ − M₂ X₂ Q₂‖²`
    pub pairing: f64,
    /// `λ ‖θ‖²`
    pub theta_reg: f64,
}

impl ObjectiveTerms {
    /// Sum of the five relaxed-objective terms.
    pub fn relaxed(&self) -> f64 {
        self.laplacian + self.label_fit + self.view_fit + self.w_reg + self.pairing
    }

    pub fn total(&self) -> f64 {
        self.relaxed() + self.theta_reg
    }

    pub fn is_finite(&self) -> bool {
        [
            self.laplacian,
            self.label_fit,
            self.view_fit,
            self.w_reg,
            self.pairing,
            self.theta_reg,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    pub fn describe(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "  laplacian  {:.12e}", self.laplacian);
        let _ = writeln!(s, "  label_fit  {:.12e}", self.label_fit);
        let _ = writeln!(s, "  view_fit   {:.12e}", self.view_fit);
        let _ = writeln!(s, "  w_reg      {:.12e}", self.w_reg);
        let _ = writeln!(s, "  pairing    {:.12e}", self.pairing);
        let _ = write!(s, "  theta_reg  {:.12e}", self.theta_reg);
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub terms: ObjectiveTerms,
    pub seconds: f64,
}

/// Objective value after initialization (iteration 0) and after every pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObjectiveTrace {
    pub entries: Vec<TraceEntry>,
    pub converged: bool,
}

impl ObjectiveTrace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn totals(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.terms.total()).collect()
    }

    pub fn last(&self) -> Option<&TraceEntry> {
        self.entries.last()
    }

    /// Relative change between consecutive totals.
    pub fn relative_changes(&self) -> Vec<f64> {
        self.totals()
            .windows(2)
            .map(|w| (w[0] - w[1]).abs() / w[0].abs().max(f64::MIN_POSITIVE))
            .collect()
    }

    pub const CSV_HEADER: &'static str =
        "iteration,total,laplacian,label_fit,view_fit,w_reg,pairing,theta_reg,seconds";

    /// Writes the trace as CSV. Wall time is excluded when `with_time` is false
    /// (the column is then zero) so the output is reproducible byte for byte.
    pub fn write_csv<W: Write>(&self, mut out: W, with_time: bool) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for e in &self.entries {
            let t = &e.terms;
            writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
                e.iteration,
                t.total(),
                t.laplacian,
                t.label_fit,
                t.view_fit,
                t.w_reg,
                t.pairing,
                t.theta_reg,
                if with_time { e.seconds } else { 0.0 }
            )?;
        }
        Ok(())
    }
}
