use crate::error::{Error, Result};

/// Row-stochastic phone confusion matrix over the text inventory.
///
/// Row `i` is the expected posterior mass a frame of phone `i` puts on every
/// phone. Confusable partners get a large off-diagonal share, so their
/// posteriors rise and fall together.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionKernel {
    dim: usize,
    data: Vec<f64>,
}

impl ConfusionKernel {
    /// Builds a kernel from symmetric confusable pairs.
    ///
    /// Every row gets `self_mass` on the diagonal and `strength` on each
    /// declared partner; whatever is left is spread evenly over the remaining
    /// phones, then the row is renormalized.
    pub fn build(dim: usize, pairs: &[(usize, usize, f64)], self_mass: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidArgument(format!("inventory size {dim} < 2")));
        }
        if !(self_mass > 0.5 && self_mass <= 1.0) {
            return Err(Error::InvalidArgument(format!("self_mass {self_mass} not in (0.5, 1]")));
        }
        let mut partners: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim];
        for &(i, j, s) in pairs {
            if i >= dim || j >= dim || i == j {
                return Err(Error::InvalidArgument(format!("bad confusable pair ({i}, {j})")));
            }
            if !(s > 0.0 && s < 0.5) {
                return Err(Error::InvalidArgument(format!("pair strength {s} not in (0, 0.5)")));
            }
            partners[i].push((j, s));
            partners[j].push((i, s));
        }

        let mut data = vec![0.0; dim * dim];
        for (i, row_partners) in partners.iter().enumerate() {
            let row = &mut data[i * dim..(i + 1) * dim];
            row[i] = self_mass;
            let mut used = self_mass;
            for &(j, s) in row_partners {
                if row[j] > 0.0 {
                    return Err(Error::InvalidKernel {
                        row: i,
                        reason: format!("phone {j} declared as partner more than once"),
                    });
                }
                row[j] = s;
                used += s;
            }
            if used > 1.0 + 1e-12 {
                return Err(Error::InvalidKernel {
                    row: i,
                    reason: format!("declared mass {used:.6} exceeds 1"),
                });
            }
            let residual = (1.0 - used).max(0.0);
            let free: Vec<usize> = (0..dim).filter(|&k| row[k] == 0.0).collect();
            if residual > 0.0 && !free.is_empty() {
                let share = residual / free.len() as f64;
                for k in free {
                    row[k] = share;
                }
            }
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= sum);
            let diag = row[i];
            if row.iter().enumerate().any(|(k, &v)| k != i && v >= diag) {
                return Err(Error::InvalidKernel { row: i, reason: "diagonal is not the row maximum".into() });
            }
        }
        Ok(ConfusionKernel { dim, data })
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        ConfusionKernel { dim, data }
    }

    /// Wraps an explicit matrix after checking the kernel invariants.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.len();
        if dim < 2 {
            return Err(Error::InvalidArgument(format!("inventory size {dim} < 2")));
        }
        let mut data = Vec::with_capacity(dim * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::InvalidKernel { row: i, reason: format!("row has {} entries", row.len()) });
            }
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidKernel { row: i, reason: "negative or non-finite entry".into() });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidKernel { row: i, reason: format!("row sums to {sum}") });
            }
            if row.iter().enumerate().any(|(k, &v)| k != i && v >= row[i]) {
                return Err(Error::InvalidKernel { row: i, reason: "diagonal is not the row maximum".into() });
            }
            data.extend_from_slice(row);
        }
        Ok(ConfusionKernel { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Phones whose off-diagonal mass in row `i` clearly exceeds the uniform
    /// residual share, strongest first.
    pub fn partners(&self, i: usize) -> Vec<usize> {
        let row = self.row(i);
        let mut off: Vec<f64> = (0..self.dim).filter(|&k| k != i).map(|k| row[k]).collect();
        off.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let floor = off[off.len() / 2];
        let mut out: Vec<usize> = (0..self.dim).filter(|&k| k != i && row[k] > floor * 2.0 + 1e-12).collect();
        out.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
        out
    }

    /// Renders the kernel as whitespace-separated text, one row per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for i in 0..self.dim {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Malformed { what: "kernel", line: n + 1, reason: e.to_string() })?;
            rows.push(row);
        }
        Self::from_rows(rows)
    }
}
