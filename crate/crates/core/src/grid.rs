//! Structured Cartesian mesh with a Q2 node layout.
//!
//! Nodes are numbered lexicographically, row-major in x: the node at
//! `(i, j)` has global index `j * (nx + 1) + i`. A Q2 element covers two
//! intervals in each direction, so `nx` and `ny` must be even.

use crate::error::ConfigError;
use crate::fields::VectorField;

/// Tolerance on `b . n` below which a boundary node is treated as tangential.
pub const TOL_BN: f64 = 1e-12;

/// Axis-aligned rectangle `[x_min, x_max] x [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x_min: 0.0,
        x_max: 1.0,
        y_min: 0.0,
        y_max: 1.0,
    };

    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Rect {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }
}

impl Default for Rect {
    fn default() -> Self {
        Rect::UNIT
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    rect: Rect,
    hx: f64,
    hy: f64,
}

impl Grid {
    /// Builds a grid with `nx x ny` intervals over `rect`.
    pub fn new(nx: usize, ny: usize, rect: Rect) -> Result<Self, ConfigError> {
        for (name, n) in [("nx", nx), ("ny", ny)] {
            if n < 2 || n % 2 != 0 {
                return Err(ConfigError::InvalidGrid(format!(
                    "{name} = {n} must be a positive even integer"
                )));
            }
        }
        let width = rect.x_max - rect.x_min;
        let height = rect.y_max - rect.y_min;
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(ConfigError::InvalidGrid(format!(
                "degenerate domain {rect:?}"
            )));
        }
        Ok(Grid {
            nx,
            ny,
            rect,
            hx: width / nx as f64,
            hy: height / ny as f64,
        })
    }

    /// Unit square with `n x n` intervals.
    pub fn unit_square(n: usize) -> Result<Self, ConfigError> {
        Grid::new(n, n, Rect::UNIT)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn rect(&self) -> Rect {
        self.rect
    }

    pub fn nodes_x(&self) -> usize {
        self.nx + 1
    }

    pub fn nodes_y(&self) -> usize {
        self.ny + 1
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes_x() * self.nodes_y()
    }

    pub fn elements_x(&self) -> usize {
        self.nx / 2
    }

    pub fn elements_y(&self) -> usize {
        self.ny / 2
    }

    pub fn num_elements(&self) -> usize {
        self.elements_x() * self.elements_y()
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.nx && j <= self.ny);
        j * (self.nx + 1) + i
    }

    /// Inverse of [`Grid::node_index`].
    #[inline]
    pub fn node_ij(&self, node: usize) -> (usize, usize) {
        (node % (self.nx + 1), node / (self.nx + 1))
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.rect.x_min + i as f64 * self.hx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.rect.y_min + j as f64 * self.hy
    }

    pub fn node_coords(&self, node: usize) -> (f64, f64) {
        let (i, j) = self.node_ij(node);
        (self.x(i), self.y(j))
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        let (i, j) = self.node_ij(node);
        i == 0 || j == 0 || i == self.nx || j == self.ny
    }

    pub fn num_boundary_nodes(&self) -> usize {
        2 * (self.nx + 1) + 2 * (self.ny - 1)
    }

    /// Global indices of the 3x3 node patch of element `(ex, ey)`, in
    /// lexicographic local order (`local = 3 * lj + li`).
    ///
    /// Panics if the element index is out of range.
    pub fn element_nodes(&self, ex: usize, ey: usize) -> [usize; 9] {
        assert!(
            ex < self.elements_x() && ey < self.elements_y(),
            "element ({ex}, {ey}) outside {}x{} element grid",
            self.elements_x(),
            self.elements_y()
        );
        let mut nodes = [0usize; 9];
        for lj in 0..3 {
            for li in 0..3 {
                nodes[3 * lj + li] = self.node_index(2 * ex + li, 2 * ey + lj);
            }
        }
        nodes
    }

    /// Element `(ex, ey)` for a flat element index (row-major in x).
    #[inline]
    pub fn element_ij(&self, element: usize) -> (usize, usize) {
        (element % self.elements_x(), element / self.elements_x())
    }

    /// Centre of element `(ex, ey)`.
    pub fn element_center(&self, ex: usize, ey: usize) -> (f64, f64) {
        (self.x(2 * ex + 1), self.y(2 * ey + 1))
    }
}

/// Boundary part a node belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryKind {
    /// `b . n = 0`: homogeneous Dirichlet.
    Dirichlet,
    /// `b . n < 0`.
    Inflow,
    /// `b . n > 0`.
    Outflow,
}

/// The four sides of the rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    pub fn outward_normal(self) -> (f64, f64) {
        match self {
            Side::Left => (-1.0, 0.0),
            Side::Right => (1.0, 0.0),
            Side::Bottom => (0.0, -1.0),
            Side::Top => (0.0, 1.0),
        }
    }
}

/// Per-node boundary labels; `None` for interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryClass {
    labels: Vec<Option<BoundaryKind>>,
}

impl BoundaryClass {
    pub fn label(&self, node: usize) -> Option<BoundaryKind> {
        self.labels[node]
    }

    pub fn labels(&self) -> &[Option<BoundaryKind>] {
        &self.labels
    }

    pub fn count(&self, kind: BoundaryKind) -> usize {
        self.labels.iter().filter(|l| **l == Some(kind)).count()
    }

    pub fn is(&self, node: usize, kind: BoundaryKind) -> bool {
        self.labels[node] == Some(kind)
    }
}

fn classify_value(bn: f64, tol: f64) -> BoundaryKind {
    if bn < -tol {
        BoundaryKind::Inflow
    } else if bn > tol {
        BoundaryKind::Outflow
    } else {
        BoundaryKind::Dirichlet
    }
}

/// Labels every boundary node by the sign of `b . n`.
///
/// A corner sees two outward normals. If either side is tangential the
/// corner is Dirichlet; if the sides disagree between inflow and outflow the
/// corner is Inflow, so the micro variable is pinned there.
pub fn classify_boundary(grid: &Grid, b: &VectorField, tol_bn: f64) -> BoundaryClass {
    let mut labels = vec![None; grid.num_nodes()];
    for (node, label) in labels.iter_mut().enumerate() {
        let (i, j) = grid.node_ij(node);
        let mut sides = Vec::with_capacity(2);
        if i == 0 {
            sides.push(Side::Left);
        }
        if i == grid.nx() {
            sides.push(Side::Right);
        }
        if j == 0 {
            sides.push(Side::Bottom);
        }
        if j == grid.ny() {
            sides.push(Side::Top);
        }
        if sides.is_empty() {
            continue;
        }
        let (x, y) = (grid.x(i), grid.y(j));
        let [bx, by] = b.direction(x, y);
        let kinds: Vec<BoundaryKind> = sides
            .iter()
            .map(|s| {
                let (nx, ny) = s.outward_normal();
                classify_value(bx * nx + by * ny, tol_bn)
            })
            .collect();
        *label = Some(if kinds.contains(&BoundaryKind::Dirichlet) {
            BoundaryKind::Dirichlet
        } else if kinds.contains(&BoundaryKind::Inflow) {
            BoundaryKind::Inflow
        } else {
            BoundaryKind::Outflow
        });
    }
    BoundaryClass { labels }
}

/// Label of the open side segment at parameter position `(x, y)` on `side`.
pub fn classify_edge_point(b: &VectorField, side: Side, x: f64, y: f64, tol_bn: f64) -> BoundaryKind {
    let [bx, by] = b.direction(x, y);
    let (nx, ny) = side.outward_normal();
    classify_value(bx * nx + by * ny, tol_bn)
}
