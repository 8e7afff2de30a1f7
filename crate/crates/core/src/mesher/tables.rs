//! The 256-case marching-cubes triangle table.
//!
//! Rather than embedding a transcribed constant array, the table is built
//! once at startup from first principles: for each corner-sign
//! configuration the iso-patch boundary is traced on the six cube faces,
//! closed into loops, oriented toward the positive side, and fan
//! triangulated. On an ambiguous face (diagonal sign pattern) the two
//! inside corners are always cut off separately; because that choice
//! depends only on the face's corner signs, the two cells sharing a face
//! always agree on its crossing segments, which makes extracted surfaces
//! watertight whenever the grid boundary stays outside the surface.

use std::sync::OnceLock;

use nalgebra::Vector3;

/// Unit-cube corner positions in conventional marching-cubes order.
const CORNER: [[f64; 3]; 8] = [
    [0.0, 0.0, 0.0],
    [1.0, 0.0, 0.0],
    [1.0, 1.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [1.0, 0.0, 1.0],
    [1.0, 1.0, 1.0],
    [0.0, 1.0, 1.0],
];

/// Edge endpoints in conventional marching-cubes order.
const EDGE: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 0),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 4),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Cube faces as corner cycles, counter-clockwise seen from outside.
const FACE: [[usize; 4]; 6] = [
    [0, 3, 2, 1], // z = 0
    [4, 5, 6, 7], // z = 1
    [0, 1, 5, 4], // y = 0
    [2, 3, 7, 6], // y = 1
    [0, 4, 7, 3], // x = 0
    [1, 2, 6, 5], // x = 1
];

/// Triangles per case, as triples of cube-edge ids.
pub type CaseTable = Vec<Vec<[u8; 3]>>;

static TABLE: OnceLock<CaseTable> = OnceLock::new();

pub fn case_table() -> &'static CaseTable {
    TABLE.get_or_init(build_table)
}

fn edge_id(a: usize, b: usize) -> u8 {
    let key = (a.min(b), a.max(b));
    EDGE.iter()
        .position(|&(x, y)| (x.min(y), x.max(y)) == key)
        .expect("not a cube edge") as u8
}

fn build_table() -> CaseTable {
    (0..256).map(build_case).collect()
}

fn build_case(case: usize) -> Vec<[u8; 3]> {
    let inside = |c: usize| case >> c & 1 == 1;

    // Boundary segments of the iso-patch, one pass per face.
    let mut segments: Vec<(u8, u8)> = Vec::new();
    for cycle in &FACE {
        let crossings: Vec<(usize, u8)> = (0..4)
            .filter(|&m| inside(cycle[m]) != inside(cycle[(m + 1) % 4]))
            .map(|m| (m, edge_id(cycle[m], cycle[(m + 1) % 4])))
            .collect();
        match crossings.len() {
            0 => {}
            2 => segments.push((crossings[0].1, crossings[1].1)),
            4 => {
                // Diagonal pattern: cut off each inside corner on its two
                // adjacent face edges.
                for m in 0..4 {
                    if inside(cycle[m]) {
                        let prev = edge_id(cycle[(m + 3) % 4], cycle[m]);
                        let next = edge_id(cycle[m], cycle[(m + 1) % 4]);
                        segments.push((prev, next));
                    }
                }
            }
            n => unreachable!("{} crossings on a quad face", n),
        }
    }

    // Each crossed edge appears in exactly two segments, so the segments
    // decompose into closed loops.
    let mut used = vec![false; segments.len()];
    let mut triangles = Vec::new();
    loop {
        let Some(start) = (0..segments.len()).find(|&s| !used[s]) else {
            break;
        };
        used[start] = true;
        let mut loop_edges = vec![segments[start].0, segments[start].1];
        loop {
            let tail = *loop_edges.last().unwrap();
            let next = (0..segments.len())
                .find(|&s| !used[s] && (segments[s].0 == tail || segments[s].1 == tail))
                .expect("open iso-patch boundary");
            used[next] = true;
            let other = if segments[next].0 == tail {
                segments[next].1
            } else {
                segments[next].0
            };
            if other == loop_edges[0] {
                break;
            }
            loop_edges.push(other);
        }
        orient_loop(&mut loop_edges, &inside);
        for m in 1..loop_edges.len() - 1 {
            triangles.push([loop_edges[0], loop_edges[m], loop_edges[m + 1]]);
        }
    }
    triangles
}

/// Flips the loop if its face normal points toward the inside corners;
/// the emitted winding must face the positive (outside) region.
fn orient_loop(loop_edges: &mut Vec<u8>, inside: &dyn Fn(usize) -> bool) {
    let mid = |e: u8| -> Vector3<f64> {
        let (a, b) = EDGE[e as usize];
        (Vector3::from(CORNER[a]) + Vector3::from(CORNER[b])) / 2.0
    };
    // Newell normal of the (near planar) loop.
    let pts: Vec<Vector3<f64>> = loop_edges.iter().map(|&e| mid(e)).collect();
    let mut normal = Vector3::zeros();
    for i in 0..pts.len() {
        let p = pts[i];
        let q = pts[(i + 1) % pts.len()];
        normal += p.cross(&q);
    }
    // Aggregate outward direction across the loop's crossed edges.
    let mut outward = Vector3::zeros();
    for &e in loop_edges.iter() {
        let (a, b) = EDGE[e as usize];
        let (from, to) = if inside(a) { (a, b) } else { (b, a) };
        outward += Vector3::from(CORNER[to]) - Vector3::from(CORNER[from]);
    }
    if normal.dot(&outward) < 0.0 {
        loop_edges.reverse();
    }
}
