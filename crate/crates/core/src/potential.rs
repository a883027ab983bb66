//! Random lattice potentials on the unit interval / square.
//!
//! The domain is cut into `N` cells per axis and the potential is constant
//! on each cell. Cell values are stored row-major (`iy * N + ix`).

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Uniform};

use crate::error::{Error, Result};
use crate::partition::{site_neighbours, SiteKind, SubregionPartition};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridSpec {
    pub dim: usize,
    pub cells_per_side: usize,
    /// Finite-difference intervals per potential cell per axis.
    pub nodes_per_cell: usize,
}

impl GridSpec {
    pub fn new(dim: usize, cells_per_side: usize, nodes_per_cell: usize) -> Result<Self> {
        let g = Self {
            dim,
            cells_per_side,
            nodes_per_cell,
        };
        g.validate()?;
        Ok(g)
    }

    /// Default resolution: 8 nodes per cell in 1D, 4 in 2D.
    pub fn with_default_resolution(dim: usize, cells_per_side: usize) -> Result<Self> {
        Self::new(dim, cells_per_side, if dim == 1 { 8 } else { 4 })
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dim) {
            return Err(Error::Parameter(format!("dim must be 1 or 2, got {}", self.dim)));
        }
        if self.cells_per_side < 2 {
            return Err(Error::Parameter(format!("need N >= 2 cells, got {}", self.cells_per_side)));
        }
        if self.nodes_per_cell < 2 {
            return Err(Error::Parameter(format!("need r >= 2 nodes per cell, got {}", self.nodes_per_cell)));
        }
        Ok(())
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.cells_per_side * self.nodes_per_cell + 1
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes_per_axis().pow(self.dim as u32)
    }

    pub fn n_cells(&self) -> usize {
        self.cells_per_side.pow(self.dim as u32)
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.cells_per_side * self.nodes_per_cell) as f64
    }

    /// Cell grid shape as `[nx, ny]` (`ny = 1` in 1D).
    pub fn cell_shape(&self) -> [usize; 2] {
        let n = self.cells_per_side;
        [n, if self.dim == 2 { n } else { 1 }]
    }

    pub fn node_shape(&self) -> [usize; 2] {
        let n = self.nodes_per_axis();
        [n, if self.dim == 2 { n } else { 1 }]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DistributionSpec {
    /// `P(V = 1) = p`, `P(V = 0) = 1 - p`.
    Bernoulli { p: f64 },
    Uniform { a: f64, b: f64 },
    /// Samples are clamped at zero.
    Normal { mean: f64, std: f64 },
    /// Parameterized by mean and standard deviation.
    Gamma { mean: f64, std: f64 },
    /// Scaled Bernoulli: value `0` or `(mean² + std²) / mean`, matching the
    /// requested mean and standard deviation.
    TwoPoint { mean: f64, std: f64 },
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        match *self {
            Self::Bernoulli { p } if !(0.0..=1.0).contains(&p) => bad(format!("bernoulli p = {p} not in [0, 1]")),
            Self::Uniform { a, b } if !(a >= 0.0 && a < b && b.is_finite()) => {
                bad(format!("uniform needs 0 <= a < b, got a = {a}, b = {b}"))
            }
            Self::Normal { mean, std } | Self::Gamma { mean, std } | Self::TwoPoint { mean, std }
                if !(std > 0.0 && std.is_finite() && mean.is_finite()) =>
            {
                bad(format!("{} needs std > 0, got mean = {mean}, std = {std}", self.name()))
            }
            Self::Gamma { mean, .. } | Self::TwoPoint { mean, .. } if mean <= 0.0 => {
                bad(format!("{} needs mean > 0, got {mean}", self.name()))
            }
            _ => Ok(()),
        }
    }

    /// Uniform distribution on `[a, b]` with the given mean and std, if it
    /// keeps `a >= 0`.
    pub fn uniform_from_moments(mean: f64, std: f64) -> Result<Self> {
        let half = std * 3f64.sqrt();
        let d = Self::Uniform {
            a: mean - half,
            b: mean + half,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Bernoulli { .. } => "bernoulli",
            Self::Uniform { .. } => "uniform",
            Self::Normal { .. } => "normal",
            Self::Gamma { .. } => "gamma",
            Self::TwoPoint { .. } => "twopoint",
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Self::Bernoulli { p } => vec![p],
            Self::Uniform { a, b } => vec![a, b],
            Self::Normal { mean, std } | Self::Gamma { mean, std } | Self::TwoPoint { mean, std } => vec![mean, std],
        }
    }

    pub fn from_name(name: &str, params: &[f64]) -> Result<Self> {
        let want = |n: usize| {
            if params.len() == n {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} takes {n} parameters, got {}", params.len())))
            }
        };
        let d = match name {
            "bernoulli" => {
                want(1)?;
                Self::Bernoulli { p: params[0] }
            }
            "uniform" => {
                want(2)?;
                Self::Uniform {
                    a: params[0],
                    b: params[1],
                }
            }
            "normal" | "gamma" | "twopoint" => {
                want(2)?;
                let (mean, std) = (params[0], params[1]);
                match name {
                    "normal" => Self::Normal { mean, std },
                    "gamma" => Self::Gamma { mean, std },
                    _ => Self::TwoPoint { mean, std },
                }
            }
            other => return Err(Error::Parameter(format!("unknown distribution '{other}'"))),
        };
        d.validate()?;
        Ok(d)
    }

    /// Draws `n` values from one generator.
    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        self.validate()?;
        let out = match *self {
            Self::Bernoulli { p } => (0..n).map(|_| if rng.random_bool(p) { 1.0 } else { 0.0 }).collect(),
            Self::Uniform { a, b } => {
                let d = Uniform::new(a, b).map_err(|e| Error::Parameter(e.to_string()))?;
                d.sample_iter(rng).take(n).collect()
            }
            Self::Normal { mean, std } => {
                let d = Normal::new(mean, std).map_err(|e| Error::Parameter(e.to_string()))?;
                (0..n).map(|_| d.sample(rng).max(0.0)).collect()
            }
            Self::Gamma { mean, std } => {
                let d = Gamma::new(mean * mean / (std * std), std * std / mean)
                    .map_err(|e| Error::Parameter(e.to_string()))?;
                d.sample_iter(rng).take(n).collect()
            }
            Self::TwoPoint { mean, std } => {
                let s2 = mean * mean + std * std;
                let (high, p) = (s2 / mean, mean * mean / s2);
                (0..n).map(|_| if rng.random_bool(p) { high } else { 0.0 }).collect()
            }
        };
        Ok(out)
    }
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())?;
        for p in self.params() {
            write!(f, " {p}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PotentialField {
    pub grid: GridSpec,
    pub cell_values: Vec<f64>,
    pub seed: u64,
    /// Source distribution; `None` for hand-built fields.
    pub dist: Option<DistributionSpec>,
}

impl PotentialField {
    pub fn new(grid: GridSpec, cell_values: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if cell_values.len() != grid.n_cells() {
            return Err(Error::Parameter(format!(
                "expected {} cell values, got {}",
                grid.n_cells(),
                cell_values.len()
            )));
        }
        if let Some(v) = cell_values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::Parameter(format!("cell value {v} is not a finite nonnegative number")));
        }
        Ok(Self {
            grid,
            cell_values,
            seed: 0,
            dist: None,
        })
    }

    pub fn constant(grid: GridSpec, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.n_cells()])
    }

    pub fn n(&self) -> usize {
        self.grid.cells_per_side
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn cell(&self, ix: usize, iy: usize) -> f64 {
        self.cell_values[iy * self.n() + ix]
    }

    pub fn is_bernoulli(&self) -> bool {
        self.cell_values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Plain-text form: a header `dim N r seed dist params...` followed by
    /// one cell value per line.
    pub fn to_text(&self) -> String {
        let g = &self.grid;
        let dist = self.dist.map_or_else(|| "custom".to_string(), |d| d.to_string());
        let mut s = format!("{} {} {} {} {}\n", g.dim, g.cells_per_side, g.nodes_per_cell, self.seed, dist);
        for v in &self.cell_values {
            s.push_str(&format!("{v}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty potential file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() < 5 {
            return Err(Error::Parse(format!("bad potential header '{header}'")));
        }
        let int = |s: &str| s.parse::<u64>().map_err(|e| Error::Parse(format!("'{s}': {e}")));
        let grid = GridSpec::new(int(fields[0])? as usize, int(fields[1])? as usize, int(fields[2])? as usize)?;
        let seed = int(fields[3])?;
        let dist = match fields[4] {
            "custom" => None,
            name => {
                let params = fields[5..]
                    .iter()
                    .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("'{s}': {e}"))))
                    .collect::<Result<Vec<_>>>()?;
                Some(DistributionSpec::from_name(name, &params)?)
            }
        };
        let values = lines
            .map(|l| l.trim().parse::<f64>().map_err(|e| Error::Parse(format!("'{l}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let mut field = Self::new(grid, values)?;
        field.seed = seed;
        field.dist = dist;
        Ok(field)
    }
}

/// `N^d` independent draws from `dist`, reproducible from `seed`.
pub fn sample_potential(grid: GridSpec, dist: DistributionSpec, seed: u64) -> Result<PotentialField> {
    grid.validate()?;
    let mut rng = rng::seeded(seed);
    let values = dist.sample_n(grid.n_cells(), &mut rng)?;
    let mut field = PotentialField::new(grid, values)?;
    field.seed = seed;
    field.dist = Some(dist);
    Ok(field)
}

/// Maximal runs `(value, length)` of a 1D Bernoulli field.
pub fn run_decomposition(field: &PotentialField) -> Result<Vec<(u8, usize)>> {
    if field.dim() != 1 {
        return Err(Error::Unsupported("run decomposition needs a 1D field".into()));
    }
    if !field.is_bernoulli() {
        return Err(Error::Unsupported("run decomposition needs a 0/1 field".into()));
    }
    let mut runs: Vec<(u8, usize)> = Vec::new();
    for &v in &field.cell_values {
        let v = v as u8;
        match runs.last_mut() {
            Some((last, len)) if *last == v => *len += 1,
            _ => runs.push((v, 1)),
        }
    }
    Ok(runs)
}

/// Connected components of the zero cells (4-connectivity in 2D), labeled
/// in order of first appearance.
pub fn zero_components(field: &PotentialField) -> Result<SubregionPartition> {
    if !field.is_bernoulli() {
        return Err(Error::Unsupported("zero components need a 0/1 field".into()));
    }
    let shape = field.grid.cell_shape();
    let dim = field.dim();
    let n_cells = field.cell_values.len();
    let mut labels = vec![None; n_cells];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..n_cells {
        if field.cell_values[start] != 0.0 || labels[start].is_some() {
            continue;
        }
        labels[start] = Some(next);
        stack.push(start);
        while let Some(s) = stack.pop() {
            for nb in site_neighbours(shape, dim, false, s) {
                if field.cell_values[nb] == 0.0 && labels[nb].is_none() {
                    labels[nb] = Some(next);
                    stack.push(nb);
                }
            }
        }
        next += 1;
    }
    let cell_measure = (1.0 / field.n() as f64).powi(dim as i32);
    SubregionPartition::from_labels(SiteKind::Cell, dim, shape, false, labels, |_| cell_measure)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(values: &[f64]) -> PotentialField {
        PotentialField::new(GridSpec::new(1, values.len(), 2).unwrap(), values.to_vec()).unwrap()
    }

    #[test]
    fn degenerate_bernoulli() {
        let g = GridSpec::new(1, 40, 2).unwrap();
        for seed in 0..5 {
            let ones = sample_potential(g, DistributionSpec::Bernoulli { p: 1.0 }, seed).unwrap();
            assert!(ones.cell_values.iter().all(|&v| v == 1.0));
            let zeros = sample_potential(g, DistributionSpec::Bernoulli { p: 0.0 }, seed).unwrap();
            assert!(zeros.cell_values.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn runs_small_cases() {
        assert_eq!(run_decomposition(&line(&[0.0, 0.0, 1.0])).unwrap(), vec![(0, 2), (1, 1)]);
        assert_eq!(run_decomposition(&line(&[0.0; 7])).unwrap(), vec![(0, 7)]);
        assert!(run_decomposition(&line(&[0.0, 0.5])).is_err());
    }

    #[test]
    fn components_small_cases() {
        assert!(zero_components(&line(&[1.0; 4])).unwrap().is_empty());
        let p = zero_components(&line(&[0.0, 1.0, 0.0, 0.0])).unwrap();
        let sizes: Vec<_> = p.regions.iter().map(|r| r.len()).collect();
        assert_eq!(sizes, vec![1, 2]);
        let checker = PotentialField::new(GridSpec::new(2, 2, 2).unwrap(), vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(zero_components(&checker).unwrap().len(), 2);
    }

    #[test]
    fn bad_parameters_rejected() {
        let g = GridSpec::new(1, 10, 2).unwrap();
        for d in [
            DistributionSpec::Bernoulli { p: 1.5 },
            DistributionSpec::Uniform { a: 1.0, b: 0.5 },
            DistributionSpec::Uniform { a: -0.1, b: 0.5 },
            DistributionSpec::Normal { mean: 0.5, std: 0.0 },
            DistributionSpec::Gamma { mean: 0.0, std: 0.1 },
        ] {
            assert!(matches!(sample_potential(g, d, 1), Err(Error::Parameter(_))), "{d:?}");
        }
        assert!(DistributionSpec::uniform_from_moments(0.5, 0.5).is_err());
        assert!(DistributionSpec::uniform_from_moments(0.5, 0.5 / 3f64.sqrt()).is_ok());
    }

    #[test]
    fn text_round_trip() {
        let g = GridSpec::new(2, 5, 4).unwrap();
        let f = sample_potential(g, DistributionSpec::Gamma { mean: 0.5, std: 0.3 }, 99).unwrap();
        let back = PotentialField::from_text(&f.to_text()).unwrap();
        assert_eq!(back, f);
    }
}
