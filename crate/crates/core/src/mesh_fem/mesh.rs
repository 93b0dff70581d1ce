//! Structured quadrilateral grids.
//!
//! Nodes are numbered row by row from the bottom-left corner, so node
//! `(i, j)` has index `j * (nx + 1) + i`. Element `(i, j)` lists its nodes
//! counter-clockwise starting at the bottom-left:
//!
//! ```text
//!   3 ---- 2
//!   |      |
//!   0 ---- 1
//! ```

use crate::error::{Error, Result};

/// One of the four sides of the rectangular domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Bottom,
    Top,
    Left,
    Right,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Top, Side::Left, Side::Right];

    pub fn name(self) -> &'static str {
        match self {
            Side::Bottom => "bottom",
            Side::Top => "top",
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    pub fn from_name(name: &str) -> Option<Side> {
        Side::ALL.into_iter().find(|s| s.name() == name)
    }
}

/// Node sets on each side, ordered along the side. Corner nodes appear in
/// both adjacent sets.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundarySets {
    pub bottom: Vec<usize>,
    pub top: Vec<usize>,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

impl BoundarySets {
    pub fn side(&self, side: Side) -> &[usize] {
        match side {
            Side::Bottom => &self.bottom,
            Side::Top => &self.top,
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    /// Sorted union of the given sides without duplicates.
    pub fn union(&self, sides: &[Side]) -> Vec<usize> {
        let mut nodes: Vec<usize> = sides
            .iter()
            .flat_map(|&s| self.side(s).iter().copied())
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub nx: usize,
    pub ny: usize,
    pub width: f64,
    pub height: f64,
    pub node_coords: Vec<[f64; 2]>,
    pub elements: Vec<[usize; 4]>,
    pub boundary_sets: BoundarySets,
}

/// Builds a uniform `nx` by `ny` element grid over `[0, width] x [0, height]`.
pub fn build_structured_mesh(nx: usize, ny: usize, width: f64, height: f64) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::invalid(format!(
            "element counts must be positive, got {nx} x {ny}"
        )));
    }
    if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
        return Err(Error::invalid(format!(
            "domain size must be positive and finite, got {width} x {height}"
        )));
    }
    let dx = width / nx as f64;
    let dy = height / ny as f64;
    let stride = nx + 1;

    let mut node_coords = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            // Exact endpoints so the far corner lands on (width, height).
            let x = if i == nx { width } else { i as f64 * dx };
            let y = if j == ny { height } else { j as f64 * dy };
            node_coords.push([x, y]);
        }
    }

    let mut elements = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let n0 = j * stride + i;
            elements.push([n0, n0 + 1, n0 + stride + 1, n0 + stride]);
        }
    }

    let boundary_sets = BoundarySets {
        bottom: (0..=nx).collect(),
        top: (0..=nx).map(|i| ny * stride + i).collect(),
        left: (0..=ny).map(|j| j * stride).collect(),
        right: (0..=ny).map(|j| j * stride + nx).collect(),
    };

    Ok(Mesh {
        nx,
        ny,
        width,
        height,
        node_coords,
        elements,
        boundary_sets,
    })
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.node_coords.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    /// Two displacement components per node.
    pub fn n_dofs(&self) -> usize {
        2 * self.n_nodes()
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    /// Grid position `(i, j)` of a node.
    pub fn node_ij(&self, node: usize) -> (usize, usize) {
        (node % (self.nx + 1), node / (self.nx + 1))
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        let (i, j) = self.node_ij(node);
        i == 0 || j == 0 || i == self.nx || j == self.ny
    }

    /// Element corner coordinates in connectivity order.
    pub fn element_coords(&self, e: usize) -> [[f64; 2]; 4] {
        self.elements[e].map(|n| self.node_coords[n])
    }
}

/// Global dof index of displacement component `comp` (0 = x, 1 = y).
#[inline]
pub fn dof(node: usize, comp: usize) -> usize {
    2 * node + comp
}
