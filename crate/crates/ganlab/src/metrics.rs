//! Diagnostics for 2D generative runs: mode coverage, the discriminator
//! input-gradient norm, level-set grids with PGM/CSV emission, latent
//! interpolation, and score-series aggregation for the random-architecture
//! stability benchmark.

use crate::diffgraph::{Graph, Tensor};
use crate::nets::Mlp;
use crate::{Error, Result};
use std::io::Write;

/// Mode-coverage diagnosis of a sample cloud against known mixture centers.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageReport {
    /// Modes owning at least `min_count` high-quality samples.
    pub covered_modes: usize,
    /// Fraction of samples within 3·std of their nearest center.
    pub hq_fraction: f64,
    /// High-quality samples owned by each center.
    pub per_mode_counts: Vec<usize>,
}

impl CoverageReport {
    /// Desk-scale quality score in `[0, k+1]`: covered modes plus the
    /// high-quality fraction. A collapse scores near 1, full coverage near
    /// k+1, and a failure to learn near 0.
    pub fn desk_score(&self) -> f64 {
        self.covered_modes as f64 + self.hq_fraction
    }

    /// One CSV row: `covered_modes,hq_fraction,per_mode_counts` with the
    /// counts joined by `;`.
    pub fn to_csv_row(&self) -> String {
        let counts: Vec<String> = self.per_mode_counts.iter().map(|c| c.to_string()).collect();
        format!(
            "{},{:.16e},{}",
            self.covered_modes,
            self.hq_fraction,
            counts.join(";")
        )
    }
}

/// Default coverage threshold: a mode must own at least a tenth of its fair
/// share of the samples, and never less than one.
pub fn default_min_count(samples: usize, k: usize) -> usize {
    if k == 0 {
        return 1;
    }
    (samples / (10 * k)).max(1)
}

/// Classifies each sample by its nearest center; a sample is high-quality iff
/// that distance is at most `3·std`, and a mode is covered iff it owns at
/// least `min_count` high-quality samples. Permutation-invariant in both
/// samples and centers.
pub fn mode_coverage(
    samples: &Tensor,
    centers: &Tensor,
    std: f64,
    min_count: usize,
) -> Result<CoverageReport> {
    if centers.rows() == 0 {
        return Err(Error::Empty("mode coverage needs at least one center".into()));
    }
    if samples.cols() != centers.cols() {
        return Err(Error::Shape(format!(
            "samples are {}-dimensional but centers are {}-dimensional",
            samples.cols(),
            centers.cols()
        )));
    }
    if !(std > 0.0) || min_count == 0 {
        return Err(Error::Config(
            "mode coverage needs std > 0 and min_count >= 1".into(),
        ));
    }
    let mut per_mode_counts = vec![0usize; centers.rows()];
    for i in 0..samples.rows() {
        let mut best = f64::INFINITY;
        let mut owner = 0usize;
        for c in 0..centers.rows() {
            let mut d2 = 0.0;
            for j in 0..samples.cols() {
                let d = samples.get(i, j) - centers.get(c, j);
                d2 += d * d;
            }
            if d2 < best {
                best = d2;
                owner = c;
            }
        }
        if best.sqrt() <= 3.0 * std {
            per_mode_counts[owner] += 1;
        }
    }
    let hq_total: usize = per_mode_counts.iter().sum();
    let hq_fraction = if samples.rows() == 0 {
        0.0
    } else {
        hq_total as f64 / samples.rows() as f64
    };
    Ok(CoverageReport {
        covered_modes: per_mode_counts.iter().filter(|&&c| c >= min_count).count(),
        hq_fraction,
        per_mode_counts,
    })
}

/// Mean over the batch of the squared input-gradient norm `‖∇ₓD(x)‖²`,
/// evaluated at the given (real) points with parameters held fixed.
pub fn grad_norm_at_real(d: &Mlp, x_real: &Tensor) -> Result<f64> {
    if x_real.rows() == 0 {
        return Err(Error::Empty("gradient norm needs a non-empty batch".into()));
    }
    let mut g = Graph::new();
    let x = g.input("x_probe", x_real.rows(), x_real.cols());
    let out = d.forward_const(&mut g, x)?;
    if g.shape_of(out).1 != 1 {
        return Err(Error::Shape(format!(
            "gradient norm expects a scalar-output network, got width {}",
            g.shape_of(out).1
        )));
    }
    let total = g.sum_all(out);
    let gx = g.grad(total, &[x])?[0];
    let sq = g.row_sq_norm(gx);
    let mean_sq = g.mean_all(sq);
    let value = g
        .eval(mean_sq, &[(x, x_real.clone())])?
        .scalar_value();
    if !value.is_finite() {
        return Err(Error::NonFinite(format!(
            "input-gradient norm is {value}"
        )));
    }
    Ok(value)
}

/// Discriminator values on a uniform grid over a 2D box.
#[derive(Clone, Debug)]
pub struct LevelsetGrid {
    /// Row-major values: row `i` fixes `y_i`, column `j` fixes `x_j`, both
    /// swept from the lower to the upper bound inclusive.
    pub values: Vec<f64>,
    pub resolution: usize,
    pub bounds: (f64, f64, f64, f64),
    pub min: f64,
    pub max: f64,
}

/// Evaluates `d` on a `resolution × resolution` grid spanning
/// `bounds = (xmin, xmax, ymin, ymax)`.
pub fn levelset_grid(
    d: &Mlp,
    bounds: (f64, f64, f64, f64),
    resolution: usize,
) -> Result<LevelsetGrid> {
    let (xmin, xmax, ymin, ymax) = bounds;
    if resolution < 2 {
        return Err(Error::Config(format!(
            "level-set resolution {resolution} must be >= 2"
        )));
    }
    if !(xmin < xmax) || !(ymin < ymax) {
        return Err(Error::Config("level-set bounds must satisfy min < max".into()));
    }
    let step = 1.0 / (resolution - 1) as f64;
    let points = Tensor::from_fn(resolution * resolution, 2, |idx, j| {
        let (row, col) = (idx / resolution, idx % resolution);
        if j == 0 {
            xmin + (xmax - xmin) * col as f64 * step
        } else {
            ymin + (ymax - ymin) * row as f64 * step
        }
    });
    let out = d.apply(&points)?;
    if out.cols() != 1 {
        return Err(Error::Shape(format!(
            "level set expects a scalar-output network, got width {}",
            out.cols()
        )));
    }
    let values = out.data().to_vec();
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(LevelsetGrid {
        values,
        resolution,
        bounds,
        min,
        max,
    })
}

impl LevelsetGrid {
    /// Binary 8-bit PGM (P5, maxval 255) with linear min-max normalization;
    /// a constant grid renders as black.
    pub fn write_pgm(&self, mut w: impl Write) -> Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.resolution, self.resolution)?;
        let span = self.max - self.min;
        let bytes: Vec<u8> = self
            .values
            .iter()
            .map(|v| {
                if span > 0.0 {
                    ((v - self.min) / span * 255.0).round().clamp(0.0, 255.0) as u8
                } else {
                    0
                }
            })
            .collect();
        w.write_all(&bytes)?;
        Ok(())
    }

    /// Companion CSV: header `x,y,d` and one row per grid point in the same
    /// row-major order as the PGM pixels, 17 significant digits.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let (xmin, xmax, ymin, ymax) = self.bounds;
        let step = 1.0 / (self.resolution - 1) as f64;
        writeln!(w, "x,y,d")?;
        for row in 0..self.resolution {
            let y = ymin + (ymax - ymin) * row as f64 * step;
            for col in 0..self.resolution {
                let x = xmin + (xmax - xmin) * col as f64 * step;
                writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e}",
                    x,
                    y,
                    self.values[row * self.resolution + col]
                )?;
            }
        }
        Ok(())
    }
}

/// Generator outputs along the straight latent segment from `z0` to `z1`:
/// `G((1−t)·z0 + t·z1)` for `t = 0, 1/(steps−1), …, 1`.
pub fn latent_walk(g: &Mlp, z0: &[f64], z1: &[f64], steps: usize) -> Result<Tensor> {
    if z0.len() != z1.len() || z0.len() != g.in_dim() {
        return Err(Error::Shape(format!(
            "latent walk dimensions: z0 {}, z1 {}, generator input {}",
            z0.len(),
            z1.len(),
            g.in_dim()
        )));
    }
    if steps < 2 {
        return Err(Error::Config(format!("latent walk needs steps >= 2, got {steps}")));
    }
    let zs = Tensor::from_fn(steps, z0.len(), |i, j| {
        let t = i as f64 / (steps - 1) as f64;
        (1.0 - t) * z0[j] + t * z1[j]
    });
    g.apply(&zs)
}

/// Aggregate statistics of score series across benchmark instances.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesSummary {
    pub final_mean: f64,
    pub final_std: f64,
    pub auc_mean: f64,
    pub auc_std: f64,
}

impl SeriesSummary {
    pub const CSV_HEADER: &'static str = "final_mean,final_std,auc_mean,auc_std";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            self.final_mean, self.final_std, self.auc_mean, self.auc_std
        )
    }
}

/// Summarizes one score series per instance: final value and trapezoid-rule
/// area under the curve, averaged across instances with population standard
/// deviations. Each series is a list of `(iteration, score)` pairs with
/// strictly increasing iterations.
pub fn bogonet_summary(runs: &[Vec<(f64, f64)>]) -> Result<SeriesSummary> {
    if runs.is_empty() {
        return Err(Error::Empty("summary over zero runs".into()));
    }
    let mut finals = Vec::with_capacity(runs.len());
    let mut aucs = Vec::with_capacity(runs.len());
    for (r, series) in runs.iter().enumerate() {
        if series.is_empty() {
            return Err(Error::Empty(format!("run {r} has an empty score series")));
        }
        let mut auc = 0.0;
        for w in series.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if !(x1 > x0) {
                return Err(Error::Config(format!(
                    "run {r}: iterations must strictly increase ({x0} then {x1})"
                )));
            }
            auc += (x1 - x0) * (y0 + y1) / 2.0;
        }
        finals.push(series.last().expect("series checked non-empty").1);
        aucs.push(auc);
    }
    let stats = |v: &[f64]| -> (f64, f64) {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64;
        (mean, var.sqrt())
    };
    let (final_mean, final_std) = stats(&finals);
    let (auc_mean, auc_std) = stats(&aucs);
    Ok(SeriesSummary {
        final_mean,
        final_std,
        auc_mean,
        auc_std,
    })
}
