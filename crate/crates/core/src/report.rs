//! Division analysis reports.
//!
//! [`analyze`] gathers everything the `analyze` subcommand prints: the
//! first-layer rows ranked by significance, the region table, dead zones and
//! practical-line crossings at a few radii. General (biased or ReLU) networks
//! get a partial report with crossings only.

use std::fmt::Write as _;
use std::io::Write;

use crate::division::{self, Crossing, DeadZone, DivisionError, RegionFeature};
use crate::net::PolicyNet;
use crate::textio::sig9;

/// Radii at which practical-line crossings are reported.
pub const REPORT_RADII: [f64; 4] = [10.0, 100.0, 1000.0, 2000.0];

pub const PARTIAL_WARNING: &str = "division theory requires simplified network";

#[derive(Debug, Clone, PartialEq)]
pub struct RowSummary {
    pub index: usize,
    pub weight: [f64; 2],
    pub weight_norm: f64,
    /// Angle of the canonical division direction, degrees in [0, 360).
    pub direction_deg: f64,
    pub significance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSummary {
    pub region: RegionFeature,
    pub asymptotic_output: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub simplified: bool,
    pub action_bound: f64,
    /// Sorted by significance, descending; rows without one come last.
    pub rows: Vec<RowSummary>,
    pub regions: Vec<RegionSummary>,
    pub dead_zones: Vec<DeadZone>,
    pub parallel_pairs: Vec<(usize, usize)>,
    pub crossings: Vec<(f64, Vec<Crossing>)>,
    pub warnings: Vec<String>,
}

pub fn analyze(net: &PolicyNet) -> Result<AnalysisReport, DivisionError> {
    let crossings = REPORT_RADII
        .iter()
        .map(|&r| (r, division::practical_line(net, r)))
        .collect();
    let mut report = AnalysisReport {
        simplified: net.is_simplified(),
        action_bound: net.action_bound(),
        rows: Vec::new(),
        regions: Vec::new(),
        dead_zones: Vec::new(),
        parallel_pairs: Vec::new(),
        crossings,
        warnings: Vec::new(),
    };
    if !net.is_simplified() {
        log::warn!("{PARTIAL_WARNING}");
        report.warnings.push(PARTIAL_WARNING.to_string());
        return Ok(report);
    }

    let dirs = division::division_directions(net)?;
    report.parallel_pairs = dirs.parallel_pairs.clone();
    for &(i, j) in &dirs.parallel_pairs {
        report
            .warnings
            .push(format!("rows {i} and {j} are parallel within 0.1°; their boundaries are merged"));
    }
    for &i in &dirs.skipped_rows {
        report.warnings.push(format!("row {i} has a near-zero weight vector and was skipped"));
    }
    for w in &report.warnings {
        log::warn!("{w}");
    }
    for line in dirs.lines.iter().filter(|l| !l.antipodal) {
        let w = net.first_layer().row(line.index);
        report.rows.push(RowSummary {
            index: line.index,
            weight: [w[0], w[1]],
            weight_norm: line.weight_norm,
            direction_deg: line.direction.angle().to_degrees(),
            significance: division::significance(net, line.index).ok(),
        });
    }
    report.rows.sort_by(|a, b| {
        b.significance
            .unwrap_or(f64::NEG_INFINITY)
            .total_cmp(&a.significance.unwrap_or(f64::NEG_INFINITY))
    });
    report.regions = division::regions(net)?
        .into_iter()
        .map(|region| RegionSummary {
            asymptotic_output: division::phi_bar(net, region.representative).ok(),
            region,
        })
        .collect();
    report.dead_zones = division::dead_zones(net)?;
    Ok(report)
}

fn phi_string(phi: &[i8]) -> String {
    phi.iter()
        .map(|&x| match x {
            1 => '+',
            -1 => '-',
            _ => '0',
        })
        .collect()
}

impl AnalysisReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let kind = if self.simplified { "simplified tanh" } else { "general" };
        let _ = writeln!(out, "# division analysis");
        let _ = writeln!(out, "network: {kind}, action bound {}", self.action_bound);
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        if self.simplified {
            let _ = writeln!(out, "\n## rows (by significance)");
            let _ = writeln!(out, "row\tw_p\tw_v\tnorm\tdirection_deg\trho\tscaled_rho");
            for r in &self.rows {
                let (rho, scaled) = match r.significance {
                    Some(rho) => (format!("{rho:.6}"), format!("{:.6}", rho * self.action_bound)),
                    None => ("degenerate".into(), "-".into()),
                };
                let _ = writeln!(
                    out,
                    "{}\t{:.6}\t{:.6}\t{:.6}\t{:.4}\t{rho}\t{scaled}",
                    r.index, r.weight[0], r.weight[1], r.weight_norm, r.direction_deg
                );
            }
            let _ = writeln!(out, "\n## regions: {}", self.regions.len());
            let _ = writeln!(out, "from_deg\tto_deg\tphi\tasymptotic_action");
            for r in &self.regions {
                let (lo, hi) = r.region.angular_interval;
                let action = r
                    .asymptotic_output
                    .map_or("-".to_string(), |mu| format!("{:.6}", mu * self.action_bound));
                let _ = writeln!(
                    out,
                    "{:.4}\t{:.4}\t{}\t{action}",
                    lo.to_degrees(),
                    hi.to_degrees(),
                    phi_string(&r.region.phi)
                );
            }
            let _ = writeln!(out, "\n## dead zones: {}", self.dead_zones.len());
            for z in &self.dead_zones {
                let (lo, hi) = z.region.angular_interval;
                let _ = writeln!(
                    out,
                    "{:.4}\t{:.4}\t{}\t{:.6}",
                    lo.to_degrees(),
                    hi.to_degrees(),
                    phi_string(&z.region.phi),
                    z.asymptotic_output * self.action_bound
                );
            }
        }
        let _ = writeln!(out, "\n## practical division line");
        for (radius, crossings) in &self.crossings {
            let angles: Vec<String> = crossings.iter().map(|c| format!("{:.4}", c.angle.to_degrees())).collect();
            let _ = writeln!(out, "radius {radius}: {} crossings [{}]", crossings.len(), angles.join(", "));
        }
        out
    }

    /// `radius,angle_deg,p,v`, one row per crossing.
    pub fn write_crossings_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "radius,angle_deg,p,v")?;
        for (radius, crossings) in &self.crossings {
            for c in crossings {
                writeln!(
                    out,
                    "{},{},{},{}",
                    sig9(*radius),
                    sig9(c.angle.to_degrees()),
                    sig9(c.state.p),
                    sig9(c.state.v)
                )?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::constructed_example;

    #[test]
    fn constructed_report() {
        let report = analyze(&constructed_example()).unwrap();
        assert_eq!(report.rows[0].index, 0);
        assert!((report.rows[0].significance.unwrap() - 1.8978).abs() < 1e-3);
        assert!((report.rows[1].significance.unwrap() - 0.0153).abs() < 1e-3);
        assert_eq!(report.regions.len(), 4);
        assert!(report.dead_zones.is_empty());
        let text = report.to_text();
        assert!(text.contains("## regions: 4"));
        assert!(text.contains("## dead zones: 0"));
    }

    #[test]
    fn general_network_gets_partial_report() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
        let net = PolicyNet::random(&[16, 16], crate::net::Activation::Relu, false, 5.0, &mut rng);
        let report = analyze(&net).unwrap();
        assert_eq!(report.warnings, vec![PARTIAL_WARNING.to_string()]);
        assert!(report.rows.is_empty());
        assert_eq!(report.crossings.len(), REPORT_RADII.len());
    }
}
