//! Labeled decompositions of the domain into subregions.
//!
//! A partition labels either mesh nodes or potential cells ("sites") laid
//! out on a `shape[0] x shape[1]` grid, row-major with `x` fastest. Sites
//! without a label (for example `V = 1` cells in a zero-set decomposition)
//! carry `None`.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// What the partition's sites are.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SiteKind {
    Node,
    Cell,
}

/// Domain sides, in the order used by [`Region::touches`].
pub const SIDE_NAMES: [&str; 4] = ["x_lo", "x_hi", "y_lo", "y_hi"];

#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub id: usize,
    pub sites: Vec<usize>,
    /// Inclusive index bounds per axis, `[min, max]`.
    pub bbox: [[usize; 2]; 2],
    /// Contact with the domain sides `x_lo, x_hi, y_lo, y_hi`.
    pub touches: [bool; 4],
    pub touches_corner: bool,
    /// Length (1D) or area (2D).
    pub measure: f64,
}

impl Region {
    pub fn touches_boundary(&self) -> bool {
        self.touches.iter().any(|&t| t)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubregionPartition {
    pub kind: SiteKind,
    pub dim: usize,
    pub shape: [usize; 2],
    pub periodic: bool,
    pub labels: Vec<Option<usize>>,
    pub regions: Vec<Region>,
}

impl SubregionPartition {
    /// Builds the region table from raw labels. Labels must be dense
    /// (`0..M` all used) and `site_measure` gives each site's length/area.
    pub fn from_labels(
        kind: SiteKind,
        dim: usize,
        shape: [usize; 2],
        periodic: bool,
        labels: Vec<Option<usize>>,
        site_measure: impl Fn(usize) -> f64,
    ) -> Result<Self> {
        if labels.len() != shape[0] * shape[1] {
            return Err(Error::Usage(format!(
                "{} labels for a {}x{} site grid",
                labels.len(),
                shape[0],
                shape[1]
            )));
        }
        let n_regions = labels.iter().flatten().map(|&l| l + 1).max().unwrap_or(0);
        let mut regions: Vec<Region> = (0..n_regions)
            .map(|id| Region {
                id,
                sites: Vec::new(),
                bbox: [[usize::MAX, 0], [usize::MAX, 0]],
                touches: [false; 4],
                touches_corner: false,
                measure: 0.0,
            })
            .collect();
        let [nx, ny] = shape;
        for (site, label) in labels.iter().enumerate() {
            let Some(id) = *label else { continue };
            let (ix, iy) = (site % nx, site / nx);
            let r = &mut regions[id];
            r.sites.push(site);
            r.bbox[0][0] = r.bbox[0][0].min(ix);
            r.bbox[0][1] = r.bbox[0][1].max(ix);
            r.bbox[1][0] = r.bbox[1][0].min(iy);
            r.bbox[1][1] = r.bbox[1][1].max(iy);
            r.measure += site_measure(site);
            if periodic {
                continue;
            }
            let on = [ix == 0, ix + 1 == nx, dim == 2 && iy == 0, dim == 2 && iy + 1 == ny];
            for (t, o) in r.touches.iter_mut().zip(on) {
                *t |= o;
            }
            if dim == 2 && (on[0] || on[1]) && (on[2] || on[3]) {
                r.touches_corner = true;
            }
        }
        if let Some(r) = regions.iter().find(|r| r.sites.is_empty()) {
            return Err(Error::Usage(format!("label {} is unused", r.id)));
        }
        Ok(Self {
            kind,
            dim,
            shape,
            periodic,
            labels,
            regions,
        })
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn label(&self, site: usize) -> Option<usize> {
        self.labels[site]
    }

    /// 4-neighbours (2-neighbours in 1D) of a site.
    pub fn neighbours(&self, site: usize) -> impl Iterator<Item = usize> {
        site_neighbours(self.shape, self.dim, self.periodic, site)
    }

    /// Whether the sites of region `id` form one connected piece.
    pub fn is_connected(&self, id: usize) -> bool {
        let region = &self.regions[id];
        let Some(&start) = region.sites.first() else {
            return true;
        };
        let mut seen = vec![false; self.labels.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut count = 0;
        while let Some(s) = queue.pop_front() {
            count += 1;
            for nb in self.neighbours(s) {
                if !seen[nb] && self.labels[nb] == Some(id) {
                    seen[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
        count == region.sites.len()
    }
}

pub(crate) fn site_neighbours(
    shape: [usize; 2],
    dim: usize,
    periodic: bool,
    site: usize,
) -> impl Iterator<Item = usize> {
    let [nx, ny] = shape;
    let (ix, iy) = (site % nx, site / nx);
    let mut out = [usize::MAX; 4];
    if ix > 0 {
        out[0] = site - 1;
    } else if periodic && nx > 2 {
        out[0] = site + nx - 1;
    }
    if ix + 1 < nx {
        out[1] = site + 1;
    } else if periodic && nx > 2 {
        out[1] = site + 1 - nx;
    }
    if dim == 2 {
        if iy > 0 {
            out[2] = site - nx;
        }
        if iy + 1 < ny {
            out[3] = site + nx;
        }
    }
    out.into_iter().filter(|&s| s != usize::MAX)
}
