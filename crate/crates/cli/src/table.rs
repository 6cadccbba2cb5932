//! Temperature-versus-gain and temperature-versus-squeezing tables.

use std::fmt::Write;

/// Temperature with its 1σ error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Gain,
    Squeezing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub probe: &'static str,
    /// Gain, or source squeezing in dB.
    pub x: f64,
    pub predicted: f64,
    pub simulated: Option<Estimate>,
    pub fitted: Option<Estimate>,
    /// Squeezing sweeps only.
    pub detected_variance: Option<f64>,
    pub optimal_gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub t0: f64,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn probes(&self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.probe) {
                out.push(r.probe);
            }
        }
        out
    }

    /// Row with the lowest predicted temperature for `probe`.
    pub fn minimum(&self, probe: &str) -> Option<&SweepRow> {
        self.rows.iter().filter(|r| r.probe == probe).min_by(|a, b| a.predicted.total_cmp(&b.predicted))
    }

    /// Strictly increasing sweep column per probe and positive temperatures.
    pub fn check(&self) -> Result<(), String> {
        for probe in self.probes() {
            let xs: Vec<f64> = self.rows.iter().filter(|r| r.probe == probe).map(|r| r.x).collect();
            if xs.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(format!("{probe}: sweep column is not strictly increasing"));
            }
        }
        for r in &self.rows {
            let temps = [Some(r.predicted), r.simulated.map(|e| e.value), r.fitted.map(|e| e.value)];
            if temps.iter().flatten().any(|t| !(*t > 0.0)) {
                return Err(format!("{} at {}: non-positive temperature", r.probe, r.x));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let simulated = self.rows.iter().any(|r| r.simulated.is_some());
        let fitted = self.rows.iter().any(|r| r.fitted.is_some());
        let mut s = String::new();
        let _ = writeln!(s, "# t0_k={:e}", self.t0);
        match self.axis {
            SweepAxis::Gain => {
                s.push_str("probe,gain,t_pred_k,ratio_pred");
                if simulated {
                    s.push_str(",t_sim_k,t_sim_err_k,ratio_sim");
                }
                if fitted {
                    s.push_str(",t_fit_k,t_fit_err_k,ratio_fit");
                }
            }
            SweepAxis::Squeezing => s.push_str("probe,squeezing_db,detected_variance,optimal_gain,t_pred_k,ratio_pred"),
        }
        s.push('\n');
        let t0 = self.t0;
        let est = |s: &mut String, e: Option<Estimate>| match e {
            Some(e) => {
                let _ = write!(s, ",{:e},{:e},{:e}", e.value, e.error, e.value / t0);
            }
            None => s.push_str(",,,"),
        };
        for r in &self.rows {
            match self.axis {
                SweepAxis::Gain => {
                    let _ = write!(s, "{},{:e},{:e},{:e}", r.probe, r.x, r.predicted, r.predicted / t0);
                    if simulated {
                        est(&mut s, r.simulated);
                    }
                    if fitted {
                        est(&mut s, r.fitted);
                    }
                }
                SweepAxis::Squeezing => {
                    let _ = write!(
                        s,
                        "{},{:e},{:e},{:e},{:e},{:e}",
                        r.probe,
                        r.x,
                        r.detected_variance.unwrap_or(f64::NAN),
                        r.optimal_gain.unwrap_or(f64::NAN),
                        r.predicted,
                        r.predicted / t0
                    );
                }
            }
            s.push('\n');
        }
        s
    }
}
