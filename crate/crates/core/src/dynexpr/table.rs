use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Gridded function of two arguments with bilinear interpolation. Arguments
/// outside the grid are clamped to its edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table2 {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major, `values[i * ys.len() + j] = f(xs[i], ys[j])`.
    pub values: Vec<f64>,
}

impl Table2 {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let inc = |v: &[f64]| v.len() >= 2 && v.windows(2).all(|w| w[0] < w[1]);
        if !inc(&xs) || !inc(&ys) {
            return Err(Error::Config("table grids need at least two strictly increasing nodes".into()));
        }
        if values.len() != xs.len() * ys.len() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "table needs {} finite values, got {}",
                xs.len() * ys.len(),
                values.len()
            )));
        }
        Ok(Self { xs, ys, values })
    }

    /// Parses rows of `x, y, value` (header line optional). The points must
    /// form a complete grid.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut pts = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let nums: std::result::Result<Vec<f64>, _> = cols.iter().map(|c| c.parse::<f64>()).collect();
            match nums {
                Ok(v) if v.len() == 3 => pts.push((v[0], v[1], v[2])),
                _ if ln == 0 => continue,
                _ => return Err(Error::Config(format!("table line {}: expected 'x, y, value'", ln + 1))),
            }
        }
        let mut xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let mut ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        for v in [&mut xs, &mut ys] {
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        let mut values = vec![f64::NAN; xs.len() * ys.len()];
        for (x, y, z) in pts {
            let i = xs.iter().position(|&a| a == x).unwrap();
            let j = ys.iter().position(|&b| b == y).unwrap();
            values[i * ys.len() + j] = z;
        }
        Self::new(xs, ys, values)
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ys.len() + j]
    }

    /// Index `i` of the grid cell `[g[i], g[i+1]]` holding `v` (clamped).
    fn cell(g: &[f64], v: f64) -> usize {
        let k = g.partition_point(|&a| a <= v);
        k.saturating_sub(1).min(g.len() - 2)
    }

    /// Cell index and local coordinate in `[0, 1]`.
    pub fn locate(g: &[f64], v: f64) -> (usize, f64) {
        let i = Self::cell(g, v);
        let t = ((v - g[i]) / (g[i + 1] - g[i])).clamp(0.0, 1.0);
        (i, t)
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let (i, s) = Self::locate(&self.xs, x);
        let (j, t) = Self::locate(&self.ys, y);
        let (a, b, c, d) = (self.at(i, j), self.at(i + 1, j), self.at(i, j + 1), self.at(i + 1, j + 1));
        (1.0 - s) * ((1.0 - t) * a + t * c) + s * ((1.0 - t) * b + t * d)
    }

    /// Enclosure over a rectangle: min/max over the nodes of every grid cell
    /// the rectangle touches. Bilinear pieces are bounded by their corner
    /// values, so this is sound.
    pub fn range(&self, x: (f64, f64), y: (f64, f64)) -> (f64, f64) {
        let (i0, i1) = (Self::cell(&self.xs, x.0), Self::cell(&self.xs, x.1) + 1);
        let (j0, j1) = (Self::cell(&self.ys, y.0), Self::cell(&self.ys, y.1) + 1);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in i0..=i1 {
            for j in j0..=j1 {
                let v = self.at(i, j);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t() -> Table2 {
        Table2::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0], vec![0.0, 1.0, 2.0, 3.0, 4.0, -5.0]).unwrap()
    }

    #[test]
    fn interpolates_nodes_and_midpoints() {
        let t = t();
        assert_eq!(t.eval(1.0, 1.0), 3.0);
        assert_eq!(t.eval(0.5, 0.0), 1.0);
        assert_eq!(t.eval(2.0, 1.0), -5.0);
        assert_eq!(t.eval(9.0, 9.0), -5.0);
    }

    #[test]
    fn range_encloses_samples() {
        let t = t();
        let (lo, hi) = t.range((0.2, 1.7), (0.1, 0.9));
        for i in 0..=30 {
            for j in 0..=30 {
                let v = t.eval(0.2 + 1.5 * i as f64 / 30.0, 0.1 + 0.8 * j as f64 / 30.0);
                assert!(v >= lo && v <= hi);
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let csv = "alpha,beta,cl\n0,0,0\n0,1,1\n1,0,2\n1,1,3\n";
        let t = Table2::from_csv(csv).unwrap();
        assert_eq!(t.eval(0.5, 0.5), 1.5);
        assert!(Table2::from_csv("0,0,1\n1,1,2\n").is_err());
    }
}
