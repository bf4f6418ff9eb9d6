//! Sparse assembly of the bilinear forms and of the block systems of each
//! scheme.
//!
//! Element contributions are computed in parallel but scattered in element
//! order, so assembled matrices are bitwise identical for any thread count.

use rayon::prelude::*;

use crate::error::ConfigError;
use crate::fem::{ElementMap, QuadRule, ShapeTable};
use crate::fields::{split_with_direction, AnisotropySpec};
use crate::grid::{BoundaryClass, BoundaryKind, Grid};
use crate::sparse::{SparseMatrix, TripletBuilder};

/// Discrete space a DOF map describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    /// Zero on the Dirichlet boundary.
    V,
    /// Zero on the Dirichlet and inflow boundaries.
    L,
}

const CONSTRAINED: usize = usize::MAX;

/// Compact numbering of the free nodes of a space.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    space: Space,
    index: Vec<usize>,
    nodes: Vec<usize>,
}

impl DofMap {
    pub fn new(grid: &Grid, bc: &BoundaryClass, space: Space) -> Self {
        let mut index = vec![CONSTRAINED; grid.num_nodes()];
        let mut nodes = Vec::with_capacity(grid.num_nodes());
        for (node, slot) in index.iter_mut().enumerate() {
            let constrained = match (space, bc.label(node)) {
                (_, Some(BoundaryKind::Dirichlet)) => true,
                (Space::L, Some(BoundaryKind::Inflow)) => true,
                _ => false,
            };
            if !constrained {
                *slot = nodes.len();
                nodes.push(node);
            }
        }
        DofMap { space, index, nodes }
    }

    pub fn space(&self) -> Space {
        self.space
    }

    /// Number of free DOFs.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.index.len()
    }

    #[inline]
    pub fn dof(&self, node: usize) -> Option<usize> {
        let i = self.index[node];
        (i != CONSTRAINED).then_some(i)
    }

    pub fn node(&self, dof: usize) -> usize {
        self.nodes[dof]
    }

    /// Scatters compact DOF values to all nodes; constrained nodes get 0.
    pub fn expand(&self, dofs: &[f64]) -> Vec<f64> {
        assert_eq!(dofs.len(), self.len());
        let mut out = vec![0.0; self.index.len()];
        for (&node, &v) in self.nodes.iter().zip(dofs) {
            out[node] = v;
        }
        out
    }

    /// Gathers free-node values from a nodal field.
    pub fn restrict(&self, nodal: &[f64]) -> Vec<f64> {
        self.nodes.iter().map(|&n| nodal[n]).collect()
    }
}

pub fn build_dofmap(grid: &Grid, bc: &BoundaryClass, space: Space) -> DofMap {
    DofMap::new(grid, bc, space)
}

/// Integrand of an assembled form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormKind {
    /// `(A_perp grad_perp u) . grad_perp v`.
    Perp,
    /// `A_par (b . grad u)(b . grad v)`.
    Par,
    /// `eps(x) A_par (b . grad u)(b . grad v)`.
    ParEpsWeighted,
    /// `A_par / eps(x) (b . grad u)(b . grad v)`.
    ParInvEps,
    /// `u v`.
    Mass,
    /// `grad u . grad v`.
    Laplace,
}

/// Per-element 9x9 matrices of `kind`, in flat element order.
pub fn element_matrices(grid: &Grid, spec: &AnisotropySpec, rule: &QuadRule, kind: FormKind) -> Vec<[f64; 81]> {
    let table = ShapeTable::new(rule);
    (0..grid.num_elements())
        .into_par_iter()
        .map(|e| {
            let (ex, ey) = grid.element_ij(e);
            local_matrix(grid, spec, rule, &table, ex, ey, kind)
        })
        .collect()
}

fn local_matrix(
    grid: &Grid,
    spec: &AnisotropySpec,
    rule: &QuadRule,
    table: &ShapeTable,
    ex: usize,
    ey: usize,
    kind: FormKind,
) -> [f64; 81] {
    let map = ElementMap::new(grid, ex, ey);
    let (ihx, ihy) = (1.0 / map.half_width.0, 1.0 / map.half_width.1);
    let det = map.det();
    let mut k = [0.0; 81];
    for (q, (&(xi, eta), &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
        let (x, y) = map.to_physical(xi, eta);
        let wd = w * det;
        match kind {
            FormKind::Mass => {
                let v = &table.values[q];
                for a in 0..9 {
                    for c in 0..9 {
                        k[9 * a + c] += wd * v[a] * v[c];
                    }
                }
            }
            FormKind::Laplace => {
                let (gx, gy) = (&table.d_xi[q], &table.d_eta[q]);
                for a in 0..9 {
                    for c in 0..9 {
                        k[9 * a + c] += wd * (gx[a] * gx[c] * ihx * ihx + gy[a] * gy[c] * ihy * ihy);
                    }
                }
            }
            FormKind::Par | FormKind::ParEpsWeighted | FormKind::ParInvEps => {
                let b = spec.b.direction(x, y);
                let coef = spec.a_par
                    * match kind {
                        FormKind::ParEpsWeighted => spec.eps.value(x),
                        FormKind::ParInvEps => 1.0 / spec.eps.value(x),
                        _ => 1.0,
                    };
                let mut s = [0.0; 9];
                for a in 0..9 {
                    s[a] = b[0] * table.d_xi[q][a] * ihx + b[1] * table.d_eta[q][a] * ihy;
                }
                for a in 0..9 {
                    let sa = wd * coef * s[a];
                    for c in 0..9 {
                        k[9 * a + c] += sa * s[c];
                    }
                }
            }
            FormKind::Perp => {
                let b = spec.b.direction(x, y);
                let ap = spec.a_perp;
                let mut p = [[0.0; 2]; 9];
                for a in 0..9 {
                    let g = [table.d_xi[q][a] * ihx, table.d_eta[q][a] * ihy];
                    p[a] = split_with_direction(b, g).1;
                }
                for a in 0..9 {
                    for c in 0..9 {
                        let ac = [
                            ap[0][0] * p[c][0] + ap[0][1] * p[c][1],
                            ap[1][0] * p[c][0] + ap[1][1] * p[c][1],
                        ];
                        k[9 * a + c] += wd * (p[a][0] * ac[0] + p[a][1] * ac[1]);
                    }
                }
            }
        }
    }
    // every form is symmetric; mirror so the pattern is bitwise symmetric too
    for a in 0..9 {
        for c in a + 1..9 {
            k[9 * c + a] = k[9 * a + c];
        }
    }
    k
}

/// Scatters element matrices onto the free DOFs of `row_map x col_map`.
pub fn scatter(grid: &Grid, locals: &[[f64; 81]], row_map: &DofMap, col_map: &DofMap) -> SparseMatrix {
    let mut t = TripletBuilder::with_capacity(row_map.len(), col_map.len(), locals.len() * 81);
    for (e, k) in locals.iter().enumerate() {
        let (ex, ey) = grid.element_ij(e);
        let nodes = grid.element_nodes(ex, ey);
        for (a, &na) in nodes.iter().enumerate() {
            let Some(r) = row_map.dof(na) else { continue };
            for (c, &nc) in nodes.iter().enumerate() {
                if let Some(col) = col_map.dof(nc) {
                    t.push(r, col, k[9 * a + c]);
                }
            }
        }
    }
    t.build()
}

pub fn assemble_form(
    grid: &Grid,
    spec: &AnisotropySpec,
    rule: &QuadRule,
    row_map: &DofMap,
    col_map: &DofMap,
    kind: FormKind,
) -> SparseMatrix {
    assert_eq!(row_map.num_nodes(), grid.num_nodes(), "row map built on another grid");
    assert_eq!(col_map.num_nodes(), grid.num_nodes(), "column map built on another grid");
    let locals = element_matrices(grid, spec, rule, kind);
    let m = scatter(grid, &locals, row_map, col_map);
    m.mark_symmetric(row_map == col_map)
}

/// Load vector `(f, theta_I)` over the free DOFs of `map`.
pub fn assemble_load<F>(grid: &Grid, f: F, rule: &QuadRule, map: &DofMap) -> Vec<f64>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let table = ShapeTable::new(rule);
    let locals: Vec<[f64; 9]> = (0..grid.num_elements())
        .into_par_iter()
        .map(|e| {
            let (ex, ey) = grid.element_ij(e);
            let map = ElementMap::new(grid, ex, ey);
            let mut l = [0.0; 9];
            for (q, (&(xi, eta), &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
                let (x, y) = map.to_physical(xi, eta);
                let fw = w * map.det() * f(x, y);
                for (a, la) in l.iter_mut().enumerate() {
                    *la += fw * table.values[q][a];
                }
            }
            l
        })
        .collect();
    let mut out = vec![0.0; map.len()];
    for (e, l) in locals.iter().enumerate() {
        let (ex, ey) = grid.element_ij(e);
        for (a, &node) in grid.element_nodes(ex, ey).iter().enumerate() {
            if let Some(i) = map.dof(node) {
                out[i] += l[a];
            }
        }
    }
    out
}

/// Discretisation being assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum SchemeKind {
    /// Singular perturbation: `a_par(u, v) / eps + a_perp(u, v) = (f, v)`.
    #[serde(rename = "p")]
    P,
    /// Two-field micro-macro system in `(u, q)`, constant eps.
    #[serde(rename = "mm")]
    MM,
    /// Micro-macro with `eps(x)` inside the `(q, w)` integral.
    #[serde(rename = "mm_var_eps")]
    MMVarEps,
    /// Five-field duality-based system in `(p, lambda, q, l, mu)`.
    #[serde(rename = "db")]
    DB,
    /// Micro-macro at `eps = 0`.
    #[serde(rename = "limit")]
    Limit,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 5] = [
        SchemeKind::P,
        SchemeKind::MM,
        SchemeKind::MMVarEps,
        SchemeKind::DB,
        SchemeKind::Limit,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeKind::P => "p",
            SchemeKind::MM => "mm",
            SchemeKind::MMVarEps => "mm_var_eps",
            SchemeKind::DB => "db",
            SchemeKind::Limit => "limit",
        }
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.as_str() == lower)
            .ok_or_else(|| {
                ConfigError::Scheme(format!("unknown scheme '{s}' (expected p, mm, mm_var_eps, db or limit)"))
            })
    }
}

/// Unknown fields of the block systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unknown {
    U,
    Q,
    P,
    Lambda,
    L,
    Mu,
}

/// One block row/column of a [`SparseSystem`].
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub unknown: Unknown,
    pub space: Space,
    pub offset: usize,
    pub len: usize,
}

/// Assembled block system with its right-hand side.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub scheme: SchemeKind,
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    pub blocks: Vec<Block>,
}

impl SparseSystem {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }

    pub fn block(&self, unknown: Unknown) -> Option<&Block> {
        self.blocks.iter().find(|b| b.unknown == unknown)
    }

    /// Slice of a solution vector belonging to `unknown`.
    pub fn part<'a>(&self, x: &'a [f64], unknown: Unknown) -> Option<&'a [f64]> {
        self.block(unknown).map(|b| &x[b.offset..b.offset + b.len])
    }
}

/// Inputs shared by every scheme assembly.
pub struct AssemblyInput<'a> {
    pub grid: &'a Grid,
    pub spec: &'a AnisotropySpec,
    pub rule: &'a QuadRule,
    pub v_map: &'a DofMap,
    pub l_map: &'a DofMap,
    /// Load vector `(f, v)` on the V DOFs.
    pub load: &'a [f64],
}

fn layout(parts: &[(Unknown, &DofMap)]) -> Vec<Block> {
    let mut offset = 0;
    parts
        .iter()
        .map(|&(unknown, map)| {
            let b = Block {
                unknown,
                space: map.space(),
                offset,
                len: map.len(),
            };
            offset += map.len();
            b
        })
        .collect()
}

/// Builds the full linear system of `scheme`.
pub fn assemble_scheme_matrix(scheme: SchemeKind, input: &AssemblyInput<'_>) -> Result<SparseSystem, ConfigError> {
    let AssemblyInput {
        grid,
        spec,
        rule,
        v_map,
        l_map,
        load,
    } = *input;
    assert_eq!(load.len(), v_map.len());
    let form = |kind, r: &DofMap, c: &DofMap| assemble_form(grid, spec, rule, r, c, kind);
    let eps_const = spec.eps.constant_value();

    match scheme {
        SchemeKind::P => {
            if spec.eps.min_value() <= 0.0 {
                return Err(ConfigError::Scheme("the P scheme needs eps > 0".into()));
            }
            let perp = form(FormKind::Perp, v_map, v_map);
            let par = form(FormKind::ParInvEps, v_map, v_map);
            let k = perp.add_scaled(&par, 1.0).mark_symmetric(true);
            Ok(SparseSystem {
                scheme,
                matrix: k,
                rhs: load.to_vec(),
                blocks: layout(&[(Unknown::U, v_map)]),
            })
        }
        SchemeKind::MM | SchemeKind::MMVarEps | SchemeKind::Limit => {
            match (scheme, eps_const) {
                (SchemeKind::MM, None) => {
                    return Err(ConfigError::Scheme("mm needs constant eps; use mm_var_eps".into()))
                }
                (SchemeKind::Limit, Some(e)) if e != 0.0 => {
                    return Err(ConfigError::Scheme("the limit model is assembled at eps = 0".into()))
                }
                (SchemeKind::Limit, None) => {
                    return Err(ConfigError::Scheme("the limit model needs eps = 0".into()))
                }
                _ => {}
            }
            let blocks = layout(&[(Unknown::U, v_map), (Unknown::Q, l_map)]);
            let (nv, nl) = (v_map.len(), l_map.len());
            let perp = form(FormKind::Perp, v_map, v_map);
            let par_vl = form(FormKind::Par, v_map, l_map);
            let par_lv = par_vl.transpose();
            let mut t = TripletBuilder::new(nv + nl, nv + nl);
            t.push_matrix(&perp, 0, 0, 1.0);
            t.push_matrix(&par_vl, 0, nv, 1.0);
            t.push_matrix(&par_lv, nv, 0, 1.0);
            if eps_const != Some(0.0) {
                let par_eps = form(FormKind::ParEpsWeighted, l_map, l_map);
                t.push_matrix(&par_eps, nv, nv, -1.0);
            }
            let mut rhs = load.to_vec();
            rhs.resize(nv + nl, 0.0);
            Ok(SparseSystem {
                scheme,
                matrix: t.build().mark_symmetric(true),
                rhs,
                blocks,
            })
        }
        SchemeKind::DB => {
            let eps = eps_const
                .ok_or_else(|| ConfigError::Scheme("the duality-based scheme needs constant eps".into()))?;
            let blocks = layout(&[
                (Unknown::P, v_map),
                (Unknown::Lambda, l_map),
                (Unknown::Q, v_map),
                (Unknown::L, v_map),
                (Unknown::Mu, l_map),
            ]);
            let off: Vec<usize> = blocks.iter().map(|b| b.offset).collect();
            let (p, lam, q, l, mu) = (off[0], off[1], off[2], off[3], off[4]);
            let n = blocks.iter().map(|b| b.len).sum();
            let perp = form(FormKind::Perp, v_map, v_map);
            let par_vv = form(FormKind::Par, v_map, v_map);
            let par_vl = form(FormKind::Par, v_map, l_map);
            let par_lv = par_vl.transpose();
            let mass = form(FormKind::Mass, v_map, v_map);
            let mut t = TripletBuilder::new(n, n);
            // a_perp(p, eta) + a_perp(q, eta) + a_par(eta, lambda) = (f, eta)
            t.push_matrix(&perp, p, p, 1.0);
            t.push_matrix(&perp, p, q, 1.0);
            t.push_matrix(&par_vl, p, lam, 1.0);
            // a_par(p, kappa) = 0
            t.push_matrix(&par_lv, lam, p, 1.0);
            // a_par(q, xi) + eps a_perp(q, xi) + eps a_perp(p, xi) + (l, xi) = eps (f, xi)
            if eps != 0.0 {
                t.push_matrix(&perp, q, p, eps);
            }
            t.push_matrix(&par_vv, q, q, 1.0);
            if eps != 0.0 {
                t.push_matrix(&perp, q, q, eps);
            }
            t.push_matrix(&mass, q, l, 1.0);
            // (q, chi) + a_par(chi, mu) = 0
            t.push_matrix(&mass, l, q, 1.0);
            t.push_matrix(&par_vl, l, mu, 1.0);
            // a_par(l, tau) = 0
            t.push_matrix(&par_lv, mu, l, 1.0);
            let mut rhs = vec![0.0; n];
            rhs[p..p + v_map.len()].copy_from_slice(load);
            for (r, f) in rhs[q..q + v_map.len()].iter_mut().zip(load) {
                *r = eps * f;
            }
            Ok(SparseSystem {
                scheme,
                matrix: t.build(),
                rhs,
                blocks,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::gauss_rule;
    use crate::fields::{EpsilonField, VectorField};
    use crate::grid::{classify_boundary, TOL_BN};

    fn aligned(eps: f64) -> AnisotropySpec {
        AnisotropySpec::new(VectorField::aligned(), EpsilonField::Constant(eps))
    }

    fn maps(grid: &Grid, b: &VectorField) -> (DofMap, DofMap) {
        let bc = classify_boundary(grid, b, TOL_BN);
        (DofMap::new(grid, &bc, Space::V), DofMap::new(grid, &bc, Space::L))
    }

    #[test]
    fn dof_counts() {
        let g = Grid::unit_square(100).unwrap();
        let (v, l) = maps(&g, &VectorField::aligned());
        assert_eq!(v.len(), 9999);
        assert_eq!(l.len(), 9900);
        let g = Grid::unit_square(2).unwrap();
        let (v, l) = maps(&g, &VectorField::aligned());
        assert_eq!(v.len(), 3);
        assert_eq!(l.len(), 2);
        assert_eq!(v.expand(&[1.0, 2.0, 3.0]), vec![0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 0.0, 0.0, 0.0]);
        assert_eq!(v.restrict(&[9.0, 9.0, 9.0, 1.0, 2.0, 3.0, 9.0, 9.0, 9.0]), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn mass_sums_to_area() {
        let g = Grid::unit_square(4).unwrap();
        let bc = classify_boundary(&g, &VectorField::aligned(), TOL_BN);
        let mut all = DofMap::new(&g, &bc, Space::V);
        // map with every node free
        all.index = (0..g.num_nodes()).collect();
        all.nodes = (0..g.num_nodes()).collect();
        let m = assemble_form(&g, &aligned(1.0), &gauss_rule(), &all, &all, FormKind::Mass);
        let total: f64 = m.values().iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        let ones = vec![1.0; g.num_nodes()];
        let loads = assemble_load(&g, |_, _| 1.0, &gauss_rule(), &all);
        let rows = m.matvec(&ones);
        for (a, b) in rows.iter().zip(&loads) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_forcing_gives_zero_load() {
        let g = Grid::unit_square(4).unwrap();
        let (v, _) = maps(&g, &VectorField::aligned());
        assert!(assemble_load(&g, |_, _| 0.0, &gauss_rule(), &v).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn block_sizes_and_symmetry() {
        let g = Grid::unit_square(6).unwrap();
        let spec = aligned(1e-3);
        let (v, l) = maps(&g, &spec.b);
        let rule = gauss_rule();
        let load = assemble_load(&g, |x, y| x + y, &rule, &v);
        let input = AssemblyInput {
            grid: &g,
            spec: &spec,
            rule: &rule,
            v_map: &v,
            l_map: &l,
            load: &load,
        };
        let mm = assemble_scheme_matrix(SchemeKind::MM, &input).unwrap();
        assert_eq!(mm.rows(), v.len() + l.len());
        assert_eq!(mm.matrix.symmetry_defect(), 0.0);
        let db = assemble_scheme_matrix(SchemeKind::DB, &input).unwrap();
        assert_eq!(db.rows(), 3 * v.len() + 2 * l.len());
        let p = assemble_scheme_matrix(SchemeKind::P, &input).unwrap();
        assert_eq!(p.rows(), v.len());
        assert!(assemble_scheme_matrix(SchemeKind::Limit, &input).is_err());
        let var = AnisotropySpec::new(VectorField::aligned(), EpsilonField::tanh_profile(0.1, 50.0, 0.25).unwrap());
        let input = AssemblyInput { spec: &var, ..input };
        assert!(assemble_scheme_matrix(SchemeKind::DB, &input).is_err());
        assert!(assemble_scheme_matrix(SchemeKind::MM, &input).is_err());
        assert!(assemble_scheme_matrix(SchemeKind::MMVarEps, &input).is_ok());
    }

    #[test]
    fn scheme_names() {
        for k in SchemeKind::ALL {
            assert_eq!(k.as_str().parse::<SchemeKind>().unwrap(), k);
        }
        assert_eq!("MM".parse::<SchemeKind>().unwrap(), SchemeKind::MM);
        assert!("xyz".parse::<SchemeKind>().is_err());
    }
}
