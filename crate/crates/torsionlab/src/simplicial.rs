//! Cell complexes with flat-bundle coefficients, the Mayer–Vietoris sequence
//! of a cut, the de Rham map and Reidemeister torsion.
//!
//! Cells carry a fixed orientation through signed boundary lists. The fiber
//! of a cell is the fiber at its base vertex (the tail of an edge, and for
//! higher cells the base of the first boundary face). Edge transport `G_e`
//! expresses the head fiber in the tail gauge, so `(dv)_e = G_e v_head - v_tail`.

use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64};
use crate::metric_complex::{
    hodge_decompose, sequence_from_cohomology, CohomologySpace, ExactSequenceWithMetrics, HodgeData,
    MetricCochainComplex,
};
use crate::quadrature::gauss_legendre;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tag {
    Z1,
    Z2,
    Y,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub boundary: Vec<(usize, i32)>,
    pub tag: Tag,
    pub barycenter: Vec<f64>,
}

/// Cochain metric on the cell basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellMetric {
    /// Every cell has norm one (times the fiber metric).
    Unit,
    /// Cell weighted by dual volume / volume, which reproduces L2 norms of
    /// constant-coefficient forms.
    Volume,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triangulation {
    pub dim: usize,
    pub cells: Vec<Vec<Cell>>,
    #[serde(default)]
    pub weights: Vec<Vec<f64>>,
    /// Period of each coordinate, if it is periodic.
    #[serde(default)]
    pub periods: Vec<Option<f64>>,
    /// Fraction of a Y cell's weight that lies on the Z1 side; ignored for
    /// other cells. Defaults to one half.
    #[serde(default)]
    pub z1_share: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Piece {
    Z,
    Z1,
    Z2RelY,
}

impl Triangulation {
    pub fn new(dim: usize, cells: Vec<Vec<Cell>>, weights: Vec<Vec<f64>>, periods: Vec<Option<f64>>) -> Result<Self> {
        let z1_share = cells.iter().map(|c| vec![0.5; c.len()]).collect();
        let t = Triangulation { dim, cells, weights, periods, z1_share };
        t.validate()?;
        Ok(t)
    }

    /// Replaces the Z1 share of the cells in `cells` (pairs of dimension and index).
    pub fn with_z1_share(mut self, cells: &[(usize, usize, f64)]) -> Result<Self> {
        for &(p, i, s) in cells {
            if p > self.dim || i >= self.count(p) {
                return Err(Error::Invalid(format!("no cell {i} in dimension {p}")));
            }
            self.z1_share[p][i] = s;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut t: Triangulation = serde_json::from_str(s).map_err(|e| Error::Invalid(e.to_string()))?;
        if t.weights.is_empty() {
            t.weights = t.cells.iter().map(|c| vec![1.0; c.len()]).collect();
        }
        if t.z1_share.is_empty() {
            t.z1_share = t.cells.iter().map(|c| vec![0.5; c.len()]).collect();
        }
        t.validate()?;
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("triangulation serialises")
    }

    pub fn count(&self, p: usize) -> usize {
        self.cells.get(p).map_or(0, |c| c.len())
    }

    fn validate(&self) -> Result<()> {
        if self.cells.len() != self.dim + 1 {
            return Err(Error::Invalid(format!("need cell lists for dimensions 0..={}", self.dim)));
        }
        if self.weights.len() != self.cells.len()
            || self.weights.iter().zip(&self.cells).any(|(w, c)| w.len() != c.len())
        {
            return Err(Error::Invalid("one weight per cell required".into()));
        }
        if self.weights.iter().flatten().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::Invalid("cell weights must be positive".into()));
        }
        if self.z1_share.len() != self.cells.len()
            || self.z1_share.iter().zip(&self.cells).any(|(w, c)| w.len() != c.len())
            || self.z1_share.iter().flatten().any(|&w| !(w > 0.0 && w <= 1.0))
        {
            return Err(Error::Invalid("z1 shares must lie in (0, 1], one per cell".into()));
        }
        for (p, cells) in self.cells.iter().enumerate() {
            for (i, cell) in cells.iter().enumerate() {
                if p == 0 && !cell.boundary.is_empty() {
                    return Err(Error::Invalid(format!("vertex {i} has a boundary")));
                }
                for &(f, s) in &cell.boundary {
                    if f >= self.count(p.wrapping_sub(1)) || !(s == 1 || s == -1) {
                        return Err(Error::Invalid(format!("cell {i} of dimension {p} has a bad face ({f}, {s})")));
                    }
                }
                if p == 1 {
                    let plus = cell.boundary.iter().filter(|b| b.1 == 1).count();
                    let minus = cell.boundary.iter().filter(|b| b.1 == -1).count();
                    if plus != 1 || minus != 1 {
                        return Err(Error::Invalid(format!("edge {i} needs one head and one tail")));
                    }
                    // the minimal image fixes the wrap of an edge; at half a period it is ambiguous
                    let (tail, head) = self.edge_ends(i);
                    let (a, b) = (&self.cells[0][tail].barycenter, &self.cells[0][head].barycenter);
                    for (k, per) in self.periods.iter().enumerate() {
                        if let (Some(per), Some(x), Some(y)) = (per, a.get(k), b.get(k)) {
                            let frac = ((y - x) / per).rem_euclid(1.0);
                            if (frac - 0.5).abs() < 1e-9 {
                                return Err(Error::Invalid(format!("edge {i} spans half the period of axis {k}")));
                            }
                        }
                    }
                }
            }
        }
        // boundary of boundary, untwisted integers
        for p in 2..=self.dim {
            for (i, cell) in self.cells[p].iter().enumerate() {
                let mut acc: HashMap<usize, i64> = HashMap::new();
                for &(f, s) in &cell.boundary {
                    for &(g, t) in &self.cells[p - 1][f].boundary {
                        *acc.entry(g).or_default() += (s * t) as i64;
                    }
                }
                if acc.values().any(|&v| v != 0) {
                    return Err(Error::Invalid(format!("boundary of boundary of cell {i} (dim {p}) is nonzero")));
                }
            }
        }
        // tags
        let mut in_z1: Vec<Vec<bool>> = self.cells.iter().map(|c| vec![false; c.len()]).collect();
        let mut in_z2 = in_z1.clone();
        for p in 1..=self.dim {
            for cell in &self.cells[p] {
                for &(f, _) in &cell.boundary {
                    let ft = self.cells[p - 1][f].tag;
                    let ok = match cell.tag {
                        Tag::Y => ft == Tag::Y,
                        Tag::Z1 => ft != Tag::Z2,
                        Tag::Z2 => ft != Tag::Z1,
                    };
                    if !ok {
                        return Err(Error::Invalid(format!(
                            "a {:?} cell of dimension {p} has a {:?} face",
                            cell.tag, ft
                        )));
                    }
                    match cell.tag {
                        Tag::Z1 => in_z1[p - 1][f] = true,
                        Tag::Z2 => in_z2[p - 1][f] = true,
                        Tag::Y => {}
                    }
                }
            }
        }
        for p in 0..=self.dim {
            for (i, cell) in self.cells[p].iter().enumerate() {
                if in_z1[p][i] && in_z2[p][i] && cell.tag != Tag::Y {
                    return Err(Error::Invalid(format!("cell {i} (dim {p}) lies on both sides but is not tagged Y")));
                }
                if cell.tag == Tag::Y && p == self.dim {
                    return Err(Error::Invalid("top-dimensional cells cannot belong to Y".into()));
                }
            }
        }
        Ok(())
    }

    fn position(&self, v: usize) -> &[f64] {
        &self.cells[0][v].barycenter
    }

    /// Displacement from a to b, unwrapped to the minimal image on periodic axes.
    pub fn displacement(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(k, (x, y))| {
                let mut dx = y - x;
                if let Some(Some(per)) = self.periods.get(k) {
                    dx -= per * (dx / per).round();
                }
                dx
            })
            .collect()
    }

    pub fn edge_ends(&self, e: usize) -> (usize, usize) {
        let b = &self.cells[1][e].boundary;
        let head = b.iter().find(|x| x.1 == 1).unwrap().0;
        let tail = b.iter().find(|x| x.1 == -1).unwrap().0;
        (tail, head)
    }

    pub fn base_vertex(&self, p: usize, i: usize) -> usize {
        match p {
            0 => i,
            1 => self.edge_ends(i).0,
            _ => self.base_vertex(p - 1, self.cells[p][i].boundary[0].0),
        }
    }

    fn closure(&self, p: usize, i: usize) -> (BTreeSet<usize>, BTreeSet<usize>) {
        let mut verts = BTreeSet::new();
        let mut edges = BTreeSet::new();
        let mut stack = vec![(p, i)];
        while let Some((q, j)) = stack.pop() {
            match q {
                0 => {
                    verts.insert(j);
                }
                1 => {
                    if edges.insert(j) {
                        let (t, h) = self.edge_ends(j);
                        verts.insert(t);
                        verts.insert(h);
                    }
                }
                _ => {
                    for &(f, _) in &self.cells[q][j].boundary {
                        stack.push((q - 1, f));
                    }
                }
            }
        }
        (verts, edges)
    }

    fn selected(&self, piece: Piece, p: usize) -> Vec<usize> {
        (0..self.count(p))
            .filter(|&i| {
                let t = self.cells[p][i].tag;
                match piece {
                    Piece::Z => true,
                    Piece::Z1 => t != Tag::Z2,
                    Piece::Z2RelY => t == Tag::Z2,
                }
            })
            .collect()
    }

    /// Circle of total length `l1 + l2` cut at two vertices into arcs of `n1`
    /// and `n2` equal edges.
    pub fn circle_split(n1: usize, n2: usize, l1: f64, l2: f64) -> Result<Self> {
        if n1 == 0 || n2 == 0 || !(l1 > 0.0 && l2 > 0.0) {
            return Err(Error::Invalid("circle arcs need at least one edge and positive length".into()));
        }
        let lengths: Vec<f64> = (0..n1).map(|_| l1 / n1 as f64).chain((0..n2).map(|_| l2 / n2 as f64)).collect();
        let n = n1 + n2;
        let total = l1 + l2;
        let mut x = vec![0.0; n];
        for i in 1..n {
            x[i] = x[i - 1] + lengths[i - 1];
        }
        let vtag = |i: usize| {
            if i == 0 || i == n1 {
                Tag::Y
            } else if i < n1 {
                Tag::Z1
            } else {
                Tag::Z2
            }
        };
        let verts: Vec<Cell> = (0..n).map(|i| Cell { boundary: vec![], tag: vtag(i), barycenter: vec![x[i]] }).collect();
        let edges: Vec<Cell> = (0..n)
            .map(|i| Cell {
                boundary: vec![((i + 1) % n, 1), (i, -1)],
                tag: if i < n1 { Tag::Z1 } else { Tag::Z2 },
                barycenter: vec![x[i] + 0.5 * lengths[i]],
            })
            .collect();
        let vw = (0..n).map(|i| 0.5 * (lengths[i] + lengths[(i + n - 1) % n])).collect();
        let ew = lengths.iter().map(|l| 1.0 / l).collect();
        let share = |a: f64, b: f64| a / (a + b);
        Self::new(1, vec![verts, edges], vec![vw, ew], vec![Some(total)])?.with_z1_share(&[
            (0, 0, share(lengths[0], lengths[n - 1])),
            (0, n1, share(lengths[n1 - 1], lengths[n1])),
        ])
    }

    /// Circle of length `l` with `k` equal edges.
    pub fn circle(k: usize, l: f64) -> Result<Self> {
        if k < 2 {
            return Err(Error::Invalid("a circle needs at least two edges".into()));
        }
        let n1 = k / 2;
        Self::circle_split(n1, k - n1, l * n1 as f64 / k as f64, l * (k - n1) as f64 / k as f64)
    }

    /// Interval [0, l] with `k` edges whose endpoints form Y and whose
    /// interior belongs to Z2, so the Z2-rel-Y complex is the Dirichlet one.
    pub fn interval_relative(k: usize, l: f64) -> Result<Self> {
        if k == 0 || !(l > 0.0) {
            return Err(Error::Invalid("interval needs k >= 1 and l > 0".into()));
        }
        let h = l / k as f64;
        let verts = (0..=k)
            .map(|i| Cell {
                boundary: vec![],
                tag: if i == 0 || i == k { Tag::Y } else { Tag::Z2 },
                barycenter: vec![i as f64 * h],
            })
            .collect();
        let edges = (0..k)
            .map(|i| Cell { boundary: vec![(i + 1, 1), (i, -1)], tag: Tag::Z2, barycenter: vec![(i as f64 + 0.5) * h] })
            .collect();
        let vw = (0..=k).map(|i| if i == 0 || i == k { 0.5 * h } else { h }).collect();
        let ew = vec![1.0 / h; k];
        Self::new(1, vec![verts, edges], vec![vw, ew], vec![None])
    }

    /// Rectangular cubical torus: axial coordinate x (arcs of `n1`, `n2`
    /// cells and lengths `l1`, `l2`, cut along the circles x = 0 and x = l1)
    /// times a transverse circle of length `ly` with `ny` cells.
    pub fn torus_split(n1: usize, n2: usize, l1: f64, l2: f64, ny: usize, ly: f64) -> Result<Self> {
        if n1 == 0 || n2 == 0 || ny < 2 || !(l1 > 0.0 && l2 > 0.0 && ly > 0.0) {
            return Err(Error::Invalid("torus needs positive lengths, n1, n2 >= 1 and ny >= 2".into()));
        }
        let nx = n1 + n2;
        let hx: Vec<f64> = (0..nx).map(|i| if i < n1 { l1 / n1 as f64 } else { l2 / n2 as f64 }).collect();
        let hy = ly / ny as f64;
        let mut x = vec![0.0; nx];
        for i in 1..nx {
            x[i] = x[i - 1] + hx[i - 1];
        }
        let dual_x: Vec<f64> = (0..nx).map(|i| 0.5 * (hx[i] + hx[(i + nx - 1) % nx])).collect();
        let col_tag = |i: usize| {
            if i == 0 || i == n1 {
                Tag::Y
            } else if i < n1 {
                Tag::Z1
            } else {
                Tag::Z2
            }
        };
        let strip_tag = |i: usize| if i < n1 { Tag::Z1 } else { Tag::Z2 };
        let v = |i: usize, j: usize| (i % nx) * ny + (j % ny);
        let ex = |i: usize, j: usize| (i % nx) * ny + (j % ny);
        let ey = |i: usize, j: usize| nx * ny + (i % nx) * ny + (j % ny);

        let mut verts = Vec::with_capacity(nx * ny);
        let mut vw = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            for j in 0..ny {
                verts.push(Cell { boundary: vec![], tag: col_tag(i), barycenter: vec![x[i], j as f64 * hy] });
                vw.push(dual_x[i] * hy);
            }
        }
        let mut edges = Vec::with_capacity(2 * nx * ny);
        let mut ew = Vec::with_capacity(2 * nx * ny);
        for i in 0..nx {
            for j in 0..ny {
                edges.push(Cell {
                    boundary: vec![(v(i + 1, j), 1), (v(i, j), -1)],
                    tag: strip_tag(i),
                    barycenter: vec![x[i] + 0.5 * hx[i], j as f64 * hy],
                });
                ew.push(hy / hx[i]);
            }
        }
        for i in 0..nx {
            for j in 0..ny {
                edges.push(Cell {
                    boundary: vec![(v(i, j + 1), 1), (v(i, j), -1)],
                    tag: col_tag(i),
                    barycenter: vec![x[i], (j as f64 + 0.5) * hy],
                });
                ew.push(dual_x[i] / hy);
            }
        }
        let mut faces = Vec::with_capacity(nx * ny);
        let mut fw = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            for j in 0..ny {
                faces.push(Cell {
                    boundary: vec![(ex(i, j), 1), (ey(i + 1, j), 1), (ex(i, j + 1), -1), (ey(i, j), -1)],
                    tag: strip_tag(i),
                    barycenter: vec![x[i] + 0.5 * hx[i], (j as f64 + 0.5) * hy],
                });
                fw.push(1.0 / (hx[i] * hy));
            }
        }
        let s0 = hx[0] / (hx[0] + hx[nx - 1]);
        let s1 = hx[n1 - 1] / (hx[n1 - 1] + hx[n1]);
        let mut shares = Vec::new();
        for j in 0..ny {
            shares.push((0, v(0, j), s0));
            shares.push((0, v(n1, j), s1));
            shares.push((1, ey(0, j), s0));
            shares.push((1, ey(n1, j), s1));
        }
        Self::new(2, vec![verts, edges, faces], vec![vw, ew, fw], vec![Some(l1 + l2), Some(ly)])?.with_z1_share(&shares)
    }
}

/// Flat bundle: transport per oriented edge plus a constant fiber metric.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatBundle {
    pub rank: usize,
    pub transports: Vec<CMat>,
    pub metric: CMat,
}

#[derive(Serialize, Deserialize)]
struct BundleJson {
    rank: usize,
    edges: Vec<Vec<[f64; 2]>>,
    metric: Vec<[f64; 2]>,
}

impl FlatBundle {
    pub fn trivial(t: &Triangulation, rank: usize) -> Self {
        FlatBundle {
            rank,
            transports: vec![CMat::identity(rank, rank); t.count(1)],
            metric: CMat::identity(rank, rank),
        }
    }

    /// Rank-one bundle with holonomy `exp(2 pi i alpha_k)` around periodic axis k.
    pub fn with_phases(t: &Triangulation, alphas: &[f64]) -> Self {
        let transports = (0..t.count(1))
            .map(|e| {
                let (tail, head) = t.edge_ends(e);
                let a = t.position(tail);
                let b = t.position(head);
                let disp = t.displacement(a, b);
                let mut phase = 0.0;
                for (k, alpha) in alphas.iter().enumerate() {
                    if let Some(Some(per)) = t.periods.get(k) {
                        let wraps = ((a[k] + disp[k] - b[k]) / per).round();
                        phase += alpha * wraps;
                    }
                }
                let z = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * phase);
                CMat::from_element(1, 1, z)
            })
            .collect();
        FlatBundle { rank: 1, transports, metric: CMat::identity(1, 1) }
    }

    pub fn to_json(&self) -> String {
        let flat = |m: &CMat| {
            let mut v = Vec::new();
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    v.push([m[(i, j)].re, m[(i, j)].im]);
                }
            }
            v
        };
        serde_json::to_string(&BundleJson {
            rank: self.rank,
            edges: self.transports.iter().map(flat).collect(),
            metric: flat(&self.metric),
        })
        .expect("bundle serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: BundleJson = serde_json::from_str(s).map_err(|e| Error::Invalid(e.to_string()))?;
        let r = j.rank;
        let mk = |v: &Vec<[f64; 2]>| -> Result<CMat> {
            if v.len() != r * r {
                return Err(Error::Shape(format!("expected {} entries", r * r)));
            }
            Ok(CMat::from_row_iterator(r, r, v.iter().map(|z| C64::new(z[0], z[1]))))
        };
        let transports = j.edges.iter().map(mk).collect::<Result<Vec<_>>>()?;
        let metric = mk(&j.metric)?;
        Ok(FlatBundle { rank: r, transports, metric })
    }

    fn check(&self, t: &Triangulation) -> Result<()> {
        if self.transports.len() != t.count(1) {
            return Err(Error::Shape(format!("{} transports for {} edges", self.transports.len(), t.count(1))));
        }
        for g in &self.transports {
            if g.shape() != (self.rank, self.rank) || g.clone().try_inverse().is_none() {
                return Err(Error::Invalid("edge transports must be invertible rank x rank matrices".into()));
            }
        }
        linalg::cholesky_lower(&self.metric, 0).map_err(|_| Error::Invalid("fiber metric must be positive definite".into()))?;
        Ok(())
    }
}

/// Transport matrices `P(b(cell) <- v)` for the vertices in the closure of each cell.
struct Transport {
    tables: Vec<Vec<HashMap<usize, CMat>>>,
}

impl Transport {
    fn build(t: &Triangulation, f: &FlatBundle) -> Result<Self> {
        f.check(t)?;
        let r = f.rank;
        let mut inverses: Vec<Option<CMat>> = vec![None; t.count(1)];
        let mut tables = Vec::with_capacity(t.dim + 1);
        tables.push((0..t.count(0)).map(|v| HashMap::from([(v, CMat::identity(r, r))])).collect());
        for p in 1..=t.dim {
            let mut level = Vec::with_capacity(t.count(p));
            for i in 0..t.count(p) {
                let (verts, edges) = t.closure(p, i);
                let base = t.base_vertex(p, i);
                let mut adj: HashMap<usize, Vec<(usize, usize, bool)>> = HashMap::new();
                for &e in &edges {
                    let (tl, hd) = t.edge_ends(e);
                    adj.entry(tl).or_default().push((hd, e, true));
                    adj.entry(hd).or_default().push((tl, e, false));
                }
                let mut table: HashMap<usize, CMat> = HashMap::new();
                table.insert(base, CMat::identity(r, r));
                let mut queue = VecDeque::from([base]);
                while let Some(u) = queue.pop_front() {
                    let pu = table[&u].clone();
                    for &(w, e, forward) in adj.get(&u).map(|v| v.as_slice()).unwrap_or(&[]) {
                        if table.contains_key(&w) {
                            continue;
                        }
                        // forward: u is the tail, P(u <- w) = G_e; otherwise G_e^{-1}.
                        let step = if forward {
                            f.transports[e].clone()
                        } else {
                            inverses[e]
                                .get_or_insert_with(|| f.transports[e].clone().try_inverse().unwrap())
                                .clone()
                        };
                        table.insert(w, &pu * step);
                        queue.push_back(w);
                    }
                }
                if table.len() != verts.len() {
                    return Err(Error::Invalid(format!("cell {i} of dimension {p} has a disconnected 1-skeleton")));
                }
                if p == 2 {
                    let mut dev: f64 = 0.0;
                    for &e in &edges {
                        let (tl, hd) = t.edge_ends(e);
                        let lhs = &table[&hd];
                        let rhs = &table[&tl] * &f.transports[e];
                        dev = dev.max(linalg::max_abs(&(lhs - rhs)));
                    }
                    if dev > 1e-12 {
                        return Err(Error::NotFlat { cell: i, deviation: dev });
                    }
                }
                level.push(table);
            }
            tables.push(level);
        }
        Ok(Transport { tables })
    }
}

/// A twisted cochain complex together with the cells behind its basis.
#[derive(Debug, Clone)]
pub struct CochainSpace {
    pub complex: MetricCochainComplex,
    /// Global cell indices per degree, in basis order.
    pub cells: Vec<Vec<usize>>,
    pub rank: usize,
}

fn build_complex(
    t: &Triangulation,
    f: &FlatBundle,
    tr: &Transport,
    piece: Piece,
    metric: CellMetric,
) -> Result<CochainSpace> {
    let r = f.rank;
    let cells: Vec<Vec<usize>> = (0..=t.dim).map(|p| t.selected(piece, p)).collect();
    let dims: Vec<usize> = cells.iter().map(|c| c.len() * r).collect();
    let mut d = Vec::with_capacity(t.dim);
    for p in 0..t.dim {
        let local: HashMap<usize, usize> = cells[p].iter().enumerate().map(|(k, &g)| (g, k)).collect();
        let mut m = CMat::zeros(dims[p + 1], dims[p]);
        for (row, &tau) in cells[p + 1].iter().enumerate() {
            for &(sigma, sign) in &t.cells[p + 1][tau].boundary {
                let Some(&col) = local.get(&sigma) else { continue };
                let b = t.base_vertex(p, sigma);
                let pm = &tr.tables[p + 1][tau][&b];
                for a in 0..r {
                    for bb in 0..r {
                        m[(row * r + a, col * r + bb)] += pm[(a, bb)] * sign as f64;
                    }
                }
            }
        }
        d.push(m);
    }
    let h = (0..=t.dim)
        .map(|p| {
            let mut hp = CMat::zeros(dims[p], dims[p]);
            for (k, &g) in cells[p].iter().enumerate() {
                let w = match metric {
                    CellMetric::Unit => 1.0,
                    CellMetric::Volume if piece == Piece::Z1 && t.cells[p][g].tag == Tag::Y => {
                        t.weights[p][g] * t.z1_share[p][g]
                    }
                    CellMetric::Volume => t.weights[p][g],
                };
                for a in 0..r {
                    for b in 0..r {
                        hp[(k * r + a, k * r + b)] = f.metric[(a, b)] * w;
                    }
                }
            }
            hp
        })
        .collect();
    let complex = MetricCochainComplex::new(dims, d, h)?;
    Ok(CochainSpace { complex, cells, rank: r })
}

pub fn twisted_cochain_complex(t: &Triangulation, f: &FlatBundle, piece: Piece, metric: CellMetric) -> Result<CochainSpace> {
    let tr = Transport::build(t, f)?;
    build_complex(t, f, &tr, piece, metric)
}

/// Matrix sending cochains on `from` cells to cochains on `to` cells: entries
/// are copied where the cell is shared and zero elsewhere.
fn transfer(from: &[usize], to: &[usize], r: usize) -> CMat {
    let pos: HashMap<usize, usize> = from.iter().enumerate().map(|(k, &g)| (g, k)).collect();
    let mut m = CMat::zeros(to.len() * r, from.len() * r);
    for (row, g) in to.iter().enumerate() {
        if let Some(&col) = pos.get(g) {
            for a in 0..r {
                m[(row * r + a, col * r + a)] = C64::new(1.0, 0.0);
            }
        }
    }
    m
}

/// Cohomology of one piece of the cut, with a class basis shared by all
/// cochain metrics on the same cells.
#[derive(Debug, Clone)]
pub struct PieceCohomology {
    pub space: CochainSpace,
    pub hodge: HodgeData,
    /// Harmonic basis for the unit cell metric; it fixes the class coordinates.
    pub classes: Vec<CMat>,
    unit_metric: Vec<CMat>,
}

impl PieceCohomology {
    fn new(space: CochainSpace, reference: &CochainSpace) -> Result<Self> {
        let hodge = hodge_decompose(&space.complex)?;
        let href = hodge_decompose(&reference.complex)?;
        for p in 0..hodge.harmonic.len() {
            if hodge.betti(p) != href.betti(p) {
                return Err(Error::Eigensolve {
                    degree: p,
                    detail: "cohomology dimension depends on the cochain metric".into(),
                });
            }
        }
        Ok(PieceCohomology {
            space,
            hodge,
            classes: href.harmonic,
            unit_metric: reference.complex.metrics().to_vec(),
        })
    }

    pub fn betti(&self, p: usize) -> usize {
        self.classes.get(p).map_or(0, |c| c.ncols())
    }

    /// Coordinates of the class of the cocycle(s) `z`.
    pub fn coordinates(&self, p: usize, z: &CMat) -> CMat {
        self.classes[p].adjoint() * &self.unit_metric[p] * z
    }

    /// L2 Gram of the class basis under the space's own metric.
    pub fn class_gram(&self, p: usize) -> CMat {
        let h = self.space.complex.metric(p);
        let proj = self.hodge.harmonic[p].adjoint() * h * &self.classes[p];
        proj.adjoint() * proj
    }
}

const MAP_CHOP: f64 = 1e-10;

/// Long exact sequence of the pair cut along Y:
/// `H^p(Z2,Y) -> H^p(Z) -> H^p(Z1) -> H^{p+1}(Z2,Y)`.
#[derive(Debug, Clone)]
pub struct MayerVietoris {
    pub z: PieceCohomology,
    pub z1: PieceCohomology,
    pub z2_rel: PieceCohomology,
    pub iota: Vec<CMat>,
    pub rho: Vec<CMat>,
    pub delta: Vec<CMat>,
    chain_defect: f64,
}

impl MayerVietoris {
    pub fn new(t: &Triangulation, f: &FlatBundle, metric: CellMetric) -> Result<Self> {
        let tr = Transport::build(t, f)?;
        let piece = |p: Piece| -> Result<PieceCohomology> {
            let space = build_complex(t, f, &tr, p, metric)?;
            let reference = build_complex(t, f, &tr, p, CellMetric::Unit)?;
            PieceCohomology::new(space, &reference)
        };
        let z = piece(Piece::Z)?;
        let z1 = piece(Piece::Z1)?;
        let z2_rel = piece(Piece::Z2RelY)?;
        let r = f.rank;
        let n = t.dim;

        let ext: Vec<CMat> = (0..=n).map(|p| transfer(&z2_rel.space.cells[p], &z.space.cells[p], r)).collect();
        let res: Vec<CMat> = (0..=n).map(|p| transfer(&z.space.cells[p], &z1.space.cells[p], r)).collect();
        let ext1: Vec<CMat> = (0..=n).map(|p| transfer(&z1.space.cells[p], &z.space.cells[p], r)).collect();
        let res2: Vec<CMat> = (0..=n).map(|p| transfer(&z.space.cells[p], &z2_rel.space.cells[p], r)).collect();

        let mut chain_defect: f64 = 0.0;
        for p in 0..n {
            let dz = z.space.complex.differential(p);
            let a = dz * &ext[p] - &ext[p + 1] * z2_rel.space.complex.differential(p);
            let b = &res[p + 1] * dz - z1.space.complex.differential(p) * &res[p];
            chain_defect = chain_defect.max(linalg::max_abs(&a)).max(linalg::max_abs(&b));
        }

        let iota = (0..=n).map(|p| z.coordinates(p, &(&ext[p] * &z2_rel.classes[p]))).collect();
        let rho = (0..=n).map(|p| z1.coordinates(p, &(&res[p] * &z.classes[p]))).collect();
        let delta = (0..n)
            .map(|p| {
                let dz = z.space.complex.differential(p);
                let img = &res2[p + 1] * (dz * (&ext1[p] * &z1.classes[p]));
                z2_rel.coordinates(p + 1, &img)
            })
            .collect();
        let mut mv = MayerVietoris { z, z1, z2_rel, iota, rho, delta, chain_defect };
        // class coordinates are O(1); roundoff in a vanishing map must not count toward its rank
        for m in mv.iota.iter_mut().chain(mv.rho.iter_mut()).chain(mv.delta.iter_mut()) {
            m.apply(|x| {
                if x.norm() < MAP_CHOP {
                    *x = C64::new(0.0, 0.0)
                }
            });
        }
        Ok(mv)
    }

    /// Largest failure of the extension and restriction maps to commute with d.
    pub fn chain_map_defect(&self) -> f64 {
        self.chain_defect
    }

    /// `[dim H^p(Z2,Y), dim H^p(Z), dim H^p(Z1)]` per degree.
    pub fn dims(&self) -> Vec<[usize; 3]> {
        (0..self.iota.len())
            .map(|p| [self.z2_rel.betti(p), self.z.betti(p), self.z1.betti(p)])
            .collect()
    }

    /// Class Gram matrices in sequence order.
    pub fn grams(&self) -> Vec<CMat> {
        let mut out = Vec::new();
        for p in 0..self.iota.len() {
            out.push(self.z2_rel.class_gram(p));
            out.push(self.z.class_gram(p));
            out.push(self.z1.class_gram(p));
        }
        out
    }

    pub fn sequence(&self) -> Result<ExactSequenceWithMetrics> {
        let grams = self.grams();
        let mut spaces = Vec::with_capacity(grams.len());
        let mut maps = Vec::with_capacity(grams.len());
        for (k, g) in grams.into_iter().enumerate() {
            let p = k / 3;
            let label = match k % 3 {
                0 => format!("H{p}(Z2,Y)"),
                1 => format!("H{p}(Z)"),
                _ => format!("H{p}(Z1)"),
            };
            spaces.push(CohomologySpace { label, gram: g });
            match k % 3 {
                0 => maps.push(self.iota[p].clone()),
                1 => maps.push(self.rho[p].clone()),
                _ => {
                    if p < self.delta.len() {
                        maps.push(self.delta[p].clone())
                    }
                }
            }
        }
        sequence_from_cohomology(spaces, maps)
    }

    /// Torsion of the sequence with the opposite sign, so that it enters the
    /// gluing formula additively.
    pub fn t_f(&self) -> Result<f64> {
        Ok(-self.sequence()?.torsion()?)
    }
}

/// Integrates a form over every cell of the given degree (0 or 1).
///
/// `form(x)` returns, for degree 0, the `rank` fiber components and, for
/// degree 1, `dim * rank` values ordered axis-major. The form must be written
/// in covering coordinates: on periodic axes it is evaluated past the period
/// and must obey the bundle's quasi-periodicity there. Edges are integrated
/// from the tail with Gauss–Legendre of the given order.
pub fn de_rham_map<F>(t: &Triangulation, rank: usize, degree: usize, order: usize, form: F) -> Result<Vec<C64>>
where
    F: Fn(&[f64]) -> Vec<C64>,
{
    match degree {
        0 => {
            let mut out = Vec::with_capacity(t.count(0) * rank);
            for v in 0..t.count(0) {
                let val = form(t.position(v));
                if val.len() != rank {
                    return Err(Error::Shape(format!("form returned {} components, expected {rank}", val.len())));
                }
                out.extend(val);
            }
            Ok(out)
        }
        1 => {
            let (nodes, weights) = gauss_legendre(order.max(1));
            let n = t.dim;
            let mut out = Vec::with_capacity(t.count(1) * rank);
            let mut x = vec![0.0; n];
            for e in 0..t.count(1) {
                let (tail, head) = t.edge_ends(e);
                let a = t.position(tail);
                let disp = t.displacement(a, t.position(head));
                let mut acc = vec![C64::new(0.0, 0.0); rank];
                for (s, w) in nodes.iter().zip(&weights) {
                    let u = 0.5 * (s + 1.0);
                    for k in 0..n {
                        x[k] = a[k] + u * disp[k];
                    }
                    let val = form(&x);
                    if val.len() != n * rank {
                        return Err(Error::Shape(format!("form returned {} components, expected {}", val.len(), n * rank)));
                    }
                    for r in 0..rank {
                        for k in 0..n {
                            acc[r] += val[k * rank + r] * (0.5 * w * disp[k]);
                        }
                    }
                }
                out.extend(acc);
            }
            Ok(out)
        }
        _ => Err(Error::Unsupported(format!("de Rham map in degree {degree}"))),
    }
}

/// Logarithm of the Reidemeister torsion of an acyclic twisted complex,
/// with unit cell metrics and the bundle's fiber metric.
pub fn reidemeister_torsion(t: &Triangulation, f: &FlatBundle) -> Result<f64> {
    let space = twisted_cochain_complex(t, f, Piece::Z, CellMetric::Unit)?;
    let hd = hodge_decompose(&space.complex)?;
    for p in 0..hd.harmonic.len() {
        if hd.betti(p) > 0 {
            return Err(Error::NotAcyclic { degree: p, dim: hd.betti(p) });
        }
    }
    Ok(crate::metric_complex::torsion_from_hodge(&hd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn trivial_circle_has_betti_one_one() {
        let t = Triangulation::circle(3, 1.0).unwrap();
        let s = twisted_cochain_complex(&t, &FlatBundle::trivial(&t, 1), Piece::Z, CellMetric::Unit).unwrap();
        let hd = hodge_decompose(&s.complex).unwrap();
        assert_eq!((hd.betti(0), hd.betti(1)), (1, 1));
    }

    #[test]
    fn antiperiodic_circle_is_acyclic() {
        let t = Triangulation::circle(4, 1.0).unwrap();
        let f = FlatBundle::with_phases(&t, &[0.5]);
        let s = twisted_cochain_complex(&t, &f, Piece::Z, CellMetric::Unit).unwrap();
        let hd = hodge_decompose(&s.complex).unwrap();
        assert_eq!((hd.betti(0), hd.betti(1)), (0, 0));
    }

    #[test]
    fn dirichlet_interval() {
        let t = Triangulation::interval_relative(1, 1.0).unwrap();
        let s = twisted_cochain_complex(&t, &FlatBundle::trivial(&t, 1), Piece::Z2RelY, CellMetric::Unit).unwrap();
        assert_eq!(s.complex.dims(), &[0, 1]);
        let hd = hodge_decompose(&s.complex).unwrap();
        assert_eq!((hd.betti(0), hd.betti(1)), (0, 1));
    }

    #[test]
    fn circle_cut_sequence() {
        let t = Triangulation::circle_split(3, 3, 1.0, 1.0).unwrap();
        let mv = MayerVietoris::new(&t, &FlatBundle::trivial(&t, 1), CellMetric::Volume).unwrap();
        assert_eq!(mv.dims(), vec![[0, 1, 1], [1, 1, 0]]);
        assert!(mv.chain_map_defect() == 0.0);
        let tf = mv.t_f().unwrap();
        assert!((tf + 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn untwisted_torus_sequence_cancels() {
        let t = Triangulation::torus_split(2, 2, 1.5, 1.5, 3, 1.0).unwrap();
        let mv = MayerVietoris::new(&t, &FlatBundle::trivial(&t, 1), CellMetric::Volume).unwrap();
        assert_eq!(mv.dims(), vec![[0, 1, 1], [1, 2, 1], [1, 1, 0]]);
        assert!(mv.t_f().unwrap().abs() < 1e-10);
    }

    #[test]
    fn twisted_torus_sequence_is_empty() {
        let t = Triangulation::torus_split(2, 2, 1.0, 1.0, 4, 1.0).unwrap();
        let f = FlatBundle::with_phases(&t, &[0.0, 0.3]);
        let mv = MayerVietoris::new(&t, &f, CellMetric::Volume).unwrap();
        assert!(mv.dims().iter().all(|d| d == &[0, 0, 0]));
        assert!(mv.sequence().unwrap().is_trivial());
        assert_eq!(mv.t_f().unwrap(), 0.0);
    }

    #[test]
    fn circle_reidemeister_torsion_is_subdivision_invariant() {
        let alpha = 0.3;
        let want = (2.0 * (PI * alpha).sin()).ln();
        for k in [3, 12] {
            let t = Triangulation::circle(k, 1.0).unwrap();
            let got = reidemeister_torsion(&t, &FlatBundle::with_phases(&t, &[alpha])).unwrap();
            assert!((got - want).abs() < 1e-12, "k={k}: {got} vs {want}");
        }
        let t = Triangulation::circle(5, 1.0).unwrap();
        assert!(matches!(
            reidemeister_torsion(&t, &FlatBundle::trivial(&t, 1)),
            Err(Error::NotAcyclic { .. })
        ));
    }

    #[test]
    fn de_rham_commutes_with_d() {
        let t = Triangulation::circle(6, 2.0).unwrap();
        let w = PI;
        let c0 = de_rham_map(&t, 1, 0, 8, |x| vec![C64::new((w * x[0]).sin(), 0.0)]).unwrap();
        let c1 = de_rham_map(&t, 1, 1, 8, |x| vec![C64::new(w * (w * x[0]).cos(), 0.0)]).unwrap();
        let s = twisted_cochain_complex(&t, &FlatBundle::trivial(&t, 1), Piece::Z, CellMetric::Unit).unwrap();
        let dc = s.complex.differential(0) * CMat::from_column_slice(c0.len(), 1, &c0);
        for e in 0..c1.len() {
            assert!((dc[(e, 0)] - c1[e]).norm() < 1e-12);
        }
    }

    #[test]
    fn non_flat_bundle_is_rejected() {
        let t = Triangulation::torus_split(1, 2, 1.0, 1.5, 3, 1.0).unwrap();
        let mut f = FlatBundle::trivial(&t, 1);
        f.transports[0] = CMat::from_element(1, 1, C64::from_polar(1.0, 0.4));
        assert!(matches!(
            twisted_cochain_complex(&t, &f, Piece::Z, CellMetric::Unit),
            Err(Error::NotFlat { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let t = Triangulation::torus_split(2, 1, 1.0, 0.5, 3, 1.0).unwrap();
        assert_eq!(Triangulation::from_json(&t.to_json()).unwrap(), t);
        let f = FlatBundle::with_phases(&t, &[0.0, 0.25]);
        assert_eq!(FlatBundle::from_json(&f.to_json()).unwrap(), f);
    }
}
