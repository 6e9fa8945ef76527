//! Rectangular domains on the square–octagon (modified medial) lattice.
//!
//! Geometry is stored in doubled integer coordinates:
//!
//! - white octagons (primal vertices) sit at `(even, even)`,
//! - black octagons (dual vertices) at `(odd, odd)`,
//! - small squares (medial vertices, one per primal edge) at mixed parity.
//!
//! A domain with `n_cols = m` and `n_rows = r` has primal vertices
//! `X ∈ {0, 2, …, 2m}`, `Y ∈ {0, 2, …, 2r − 2}` and dual vertices
//! `X ∈ {1, …, 2m − 1}`, `Y ∈ {−1, …, 2r − 1}`. The left and right primal
//! columns are chains of white octagons (arcs `[ab]` and `[cd]`); the bottom
//! and top dual rows are chains of black octagons (arcs `[bc]` and `[da]`).
//! The marked points are the four corner small squares, counterclockwise
//! `a` (top left), `b` (bottom left), `c` (bottom right), `d` (top right).
//!
//! Loops and interfaces run along strand segments, the edges shared by a
//! white and a black octagon. Each strand segment joins two small squares.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = (i32, i32);

/// Face colour classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaceKind {
    WhiteOctagon,
    BlackOctagon,
    SmallSquare,
}

/// What a small square does in the loop configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SquareRole {
    /// Free binary choice, one bit of the configuration.
    Random,
    /// Boundary square of a white chain: strands never cross its primal edge.
    FixedOpen,
    /// Boundary square of a black chain: strands never cross its dual edge.
    FixedClosed,
    /// Corner square where an interface starts or ends.
    Marked,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub kind: FaceKind,
    pub pos: Point,
}

pub const NO_SEGMENT: u32 = u32::MAX;

/// A small square together with the strand segments touching it.
///
/// `slots[2 * ps + qs]` holds the segment joining primal neighbour `ps` and
/// dual neighbour `qs`, where index 0 is the lower/left neighbour.
#[derive(Debug, Clone)]
pub struct Square {
    pub pos: Point,
    pub role: SquareRole,
    pub slots: [u32; 4],
    /// Index into the configuration bit vector for random squares.
    pub bit: Option<u32>,
}

/// An octagon–octagon edge: a piece of loop joining two small squares.
#[derive(Debug, Clone, Copy)]
pub struct Segment {
    pub white: Point,
    pub black: Point,
    /// `(square index, slot)` at each end.
    pub ends: [(u32, u8); 2],
}

/// Serializable recipe for a domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub n_cols: usize,
    pub n_rows: usize,
    pub mesh: f64,
}

/// Marked point labels in counterclockwise order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Marked {
    A,
    B,
    C,
    D,
}

impl Marked {
    pub const ALL: [Marked; 4] = [Marked::A, Marked::B, Marked::C, Marked::D];
}

#[derive(Debug, Clone)]
pub struct DiscreteDomain {
    pub mesh: f64,
    pub n_cols: usize,
    pub n_rows: usize,
    /// Square indices of `a, b, c, d`.
    pub marked: [u32; 4],
    pub faces: Vec<Face>,
    /// Face indices of `[ab], [bc], [cd], [da]`, each from its first marked
    /// point to the next.
    pub boundary_arcs: [Vec<usize>; 4],
    pub squares: Vec<Square>,
    pub segments: Vec<Segment>,
    /// Square index of each random bit.
    pub random_squares: Vec<u32>,
    face_at: HashMap<Point, usize>,
    square_at: HashMap<Point, u32>,
}

/// A rule broken by a domain, as reported by [`validate_domain`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    MarkedCount(usize),
    MarkedOrder,
    MarkedJunction(Marked),
    ArcEndpoints(usize),
    ArcColour { arc: usize, face: usize },
    ColourParity { face: usize },
    SegmentColours { segment: usize },
}

fn is_primal(p: Point) -> bool {
    p.0.rem_euclid(2) == 0 && p.1.rem_euclid(2) == 0
}

/// Primal (white) and dual (black) neighbours of a small square, lower/left first.
pub fn square_neighbours(pos: Point) -> ([Point; 2], [Point; 2]) {
    let (x, y) = pos;
    if x.rem_euclid(2) == 1 {
        // horizontal primal edge
        ([(x - 1, y), (x + 1, y)], [(x, y - 1), (x, y + 1)])
    } else {
        ([(x, y - 1), (x, y + 1)], [(x - 1, y), (x + 1, y)])
    }
}

impl DiscreteDomain {
    pub fn from_spec(spec: &DomainSpec) -> Result<Self> {
        build_rect_domain(spec.n_cols, spec.n_rows, spec.mesh)
    }

    pub fn spec(&self) -> DomainSpec {
        DomainSpec {
            n_cols: self.n_cols,
            n_rows: self.n_rows,
            mesh: self.mesh,
        }
    }

    pub fn n_random(&self) -> usize {
        self.random_squares.len()
    }

    pub fn face_index(&self, p: Point) -> Option<usize> {
        self.face_at.get(&p).copied()
    }

    pub fn square_index(&self, p: Point) -> Option<u32> {
        self.square_at.get(&p).copied()
    }

    /// Physical position of a lattice point.
    pub fn position(&self, p: Point) -> (f64, f64) {
        (0.5 * self.mesh * p.0 as f64, 0.5 * self.mesh * p.1 as f64)
    }

    pub fn marked_label(&self, square: u32) -> Option<Marked> {
        self.marked.iter().position(|&m| m == square).map(|i| Marked::ALL[i])
    }

    pub fn count_faces(&self, kind: FaceKind) -> usize {
        self.faces.iter().filter(|f| f.kind == kind).count()
    }

    pub fn count_squares(&self, role: SquareRole) -> usize {
        self.squares.iter().filter(|s| s.role == role).count()
    }

    /// Side ratio `[bc] : [ab]` of the underlying rectangle.
    pub fn aspect(&self) -> f64 {
        self.n_cols as f64 / self.n_rows as f64
    }
}

/// Rectangular block with the marked points at its four corner junctions.
pub fn build_rect_domain(n_cols: usize, n_rows: usize, mesh: f64) -> Result<DiscreteDomain> {
    if n_cols < 2 || n_rows < 2 {
        return Err(Error::Sizing(format!(
            "domain needs n_cols >= 2 and n_rows >= 2, got {n_cols} x {n_rows}"
        )));
    }
    if !(mesh > 0.0) || !mesh.is_finite() {
        return Err(Error::Sizing(format!("mesh must be positive, got {mesh}")));
    }
    let m = n_cols as i32;
    let top = 2 * n_rows as i32 - 1; // Y of the top dual row and of a, d

    let mut faces = Vec::new();
    let mut face_at = HashMap::new();
    let mut push_face = |faces: &mut Vec<Face>, kind, pos| {
        face_at.insert(pos, faces.len());
        faces.push(Face { kind, pos });
    };

    for y in (0..top).step_by(2) {
        for x in (0..=2 * m).step_by(2) {
            push_face(&mut faces, FaceKind::WhiteOctagon, (x, y));
        }
    }
    for y in (-1..=top).step_by(2) {
        for x in (1..2 * m).step_by(2) {
            push_face(&mut faces, FaceKind::BlackOctagon, (x, y));
        }
    }

    let mut squares: Vec<Square> = Vec::new();
    let mut square_at = HashMap::new();
    let mut random_squares = Vec::new();
    let mut add_square = |faces: &mut Vec<Face>, pos: Point, role: SquareRole| {
        let bit = if role == SquareRole::Random {
            random_squares.push(squares.len() as u32);
            Some(random_squares.len() as u32 - 1)
        } else {
            None
        };
        square_at.insert(pos, squares.len() as u32);
        squares.push(Square {
            pos,
            role,
            slots: [NO_SEGMENT; 4],
            bit,
        });
        push_face(faces, FaceKind::SmallSquare, pos);
    };

    // Horizontal primal edges: all random.
    for y in (0..top).step_by(2) {
        for x in (1..2 * m).step_by(2) {
            add_square(&mut faces, (x, y), SquareRole::Random);
        }
    }
    // Vertical primal edges and the corner squares.
    for y in (-1..=top).step_by(2) {
        for x in (0..=2 * m).step_by(2) {
            let side = x == 0 || x == 2 * m;
            let end_row = y == -1 || y == top;
            let role = match (side, end_row) {
                (true, true) => SquareRole::Marked,
                (true, false) => SquareRole::FixedOpen,
                (false, true) => SquareRole::FixedClosed,
                (false, false) => SquareRole::Random,
            };
            add_square(&mut faces, (x, y), role);
        }
    }

    let a = square_at[&(0, top)];
    let b = square_at[&(0, -1)];
    let c = square_at[&(2 * m, -1)];
    let d = square_at[&(2 * m, top)];

    // Strand segments: every white–black diagonal pair in the domain.
    let mut segments = Vec::new();
    for f in faces.iter().filter(|f| f.kind == FaceKind::WhiteOctagon) {
        let p = f.pos;
        for (sx, sy) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
            let q = (p.0 + sx, p.1 + sy);
            if !face_at.contains_key(&q) {
                continue;
            }
            let mut ends = [(0u32, 0u8); 2];
            for (k, mpos) in [(p.0 + sx, p.1), (p.0, p.1 + sy)].into_iter().enumerate() {
                let si = *square_at
                    .get(&mpos)
                    .expect("strand segment endpoint must be a small square of the domain");
                let (prim, dual) = square_neighbours(mpos);
                let ps = prim.iter().position(|&z| z == p).unwrap();
                let qs = dual.iter().position(|&z| z == q).unwrap();
                let slot = (2 * ps + qs) as u8;
                ends[k] = (si, slot);
            }
            let id = segments.len() as u32;
            for &(si, slot) in &ends {
                squares[si as usize].slots[slot as usize] = id;
            }
            segments.push(Segment {
                white: p,
                black: q,
                ends,
            });
        }
    }

    let fi = |p: Point| face_at[&p];
    let sq_face = |s: u32| fi(squares[s as usize].pos);
    let mut arcs: [Vec<usize>; 4] = Default::default();
    // [ab]: down the left white column.
    arcs[0].push(sq_face(a));
    for y in (0..top).rev() {
        arcs[0].push(fi((0, y)));
    }
    arcs[0].push(sq_face(b));
    // [bc]: along the bottom black row.
    for x in 0..=2 * m {
        arcs[1].push(fi((x, -1)));
    }
    // [cd]: up the right white column.
    for y in -1..=top {
        arcs[2].push(fi((2 * m, y)));
    }
    // [da]: back along the top black row.
    for x in (0..=2 * m).rev() {
        arcs[3].push(fi((x, top)));
    }

    Ok(DiscreteDomain {
        mesh,
        n_cols,
        n_rows,
        marked: [a, b, c, d],
        faces,
        boundary_arcs: arcs,
        squares,
        segments,
        random_squares,
        face_at,
        square_at,
    })
}

/// Lists every broken domain invariant; empty means valid.
pub fn validate_domain(d: &DiscreteDomain) -> Vec<Violation> {
    let mut out = Vec::new();
    let distinct: std::collections::HashSet<_> = d.marked.iter().collect();
    if distinct.len() != 4 || d.marked.iter().any(|&m| m as usize >= d.squares.len()) {
        out.push(Violation::MarkedCount(distinct.len()));
        return out;
    }

    let pts: Vec<(f64, f64)> = d
        .marked
        .iter()
        .map(|&m| {
            let p = d.squares[m as usize].pos;
            (p.0 as f64, p.1 as f64)
        })
        .collect();
    let mut area2 = 0.0;
    for i in 0..4 {
        let (x0, y0) = pts[i];
        let (x1, y1) = pts[(i + 1) % 4];
        area2 += x0 * y1 - x1 * y0;
    }
    if area2 <= 0.0 {
        out.push(Violation::MarkedOrder);
    }

    for (i, &m) in d.marked.iter().enumerate() {
        let sq = &d.squares[m as usize];
        let live: Vec<u32> = sq.slots.iter().copied().filter(|&s| s != NO_SEGMENT).collect();
        let ok = live.len() == 1 && {
            let seg = d.segments[live[0] as usize];
            let w = d.face_index(seg.white).map(|f| d.faces[f].kind);
            let b = d.face_index(seg.black).map(|f| d.faces[f].kind);
            w == Some(FaceKind::WhiteOctagon) && b == Some(FaceKind::BlackOctagon)
        };
        if !ok {
            out.push(Violation::MarkedJunction(Marked::ALL[i]));
        }
    }

    for (k, arc) in d.boundary_arcs.iter().enumerate() {
        let start = d.face_index(d.squares[d.marked[k] as usize].pos);
        let end = d.face_index(d.squares[d.marked[(k + 1) % 4] as usize].pos);
        if arc.first().copied() != start || arc.last().copied() != end {
            out.push(Violation::ArcEndpoints(k));
        }
        let want = if k % 2 == 0 {
            FaceKind::WhiteOctagon
        } else {
            FaceKind::BlackOctagon
        };
        for &f in arc {
            let kind = d.faces[f].kind;
            if kind != FaceKind::SmallSquare && kind != want {
                out.push(Violation::ArcColour { arc: k, face: f });
            }
        }
    }

    for (i, f) in d.faces.iter().enumerate() {
        let ok = match f.kind {
            FaceKind::WhiteOctagon => is_primal(f.pos),
            FaceKind::BlackOctagon => f.pos.0.rem_euclid(2) == 1 && f.pos.1.rem_euclid(2) == 1,
            FaceKind::SmallSquare => (f.pos.0 + f.pos.1).rem_euclid(2) == 1,
        };
        if !ok {
            out.push(Violation::ColourParity { face: i });
        }
    }

    for (i, s) in d.segments.iter().enumerate() {
        let w = d.face_index(s.white).map(|f| d.faces[f].kind);
        let b = d.face_index(s.black).map(|f| d.faces[f].kind);
        if w != Some(FaceKind::WhiteOctagon) || b != Some(FaceKind::BlackOctagon) {
            out.push(Violation::SegmentColours { segment: i });
        }
    }
    out
}
