//! Incremental Bowyer–Watson Delaunay triangulation.

use crate::geometry::{orient, BoundingBox, Point};

use super::MeshError;

#[derive(Debug, Clone)]
struct Tri {
    v: [usize; 3],
    // nbr[i] lies across the edge opposite v[i]
    nbr: [Option<usize>; 3],
    alive: bool,
}

/// `> 0` when `p` lies strictly inside the circumcircle of the CCW triangle
/// `(a, b, c)`, after discounting rounding noise.
fn incircle(a: Point, b: Point, c: Point, p: Point) -> f64 {
    let (adx, ady) = (a.x - p.x, a.y - p.y);
    let (bdx, bdy) = (b.x - p.x, b.y - p.y);
    let (cdx, cdy) = (c.x - p.x, c.y - p.y);
    let alift = adx * adx + ady * ady;
    let blift = bdx * bdx + bdy * bdy;
    let clift = cdx * cdx + cdy * cdy;
    let t1 = alift * (bdx * cdy - bdy * cdx);
    let t2 = blift * (cdx * ady - cdy * adx);
    let t3 = clift * (adx * bdy - ady * bdx);
    let det = t1 + t2 + t3;
    let permanent = alift * (bdx * cdy).abs().max((bdy * cdx).abs())
        + blift * (cdx * ady).abs().max((cdy * adx).abs())
        + clift * (adx * bdy).abs().max((ady * bdx).abs());
    if det.abs() <= 1e-12 * permanent {
        0.0
    } else {
        det
    }
}

/// Delaunay triangulation of `points`; triangles are counter-clockwise index
/// triples into `points`. Points are inserted in the given order.
pub fn triangulate(points: &[Point]) -> Result<Vec<[usize; 3]>, MeshError> {
    let n = points.len();
    if n < 3 {
        return Err(MeshError::TooFewPoints(n));
    }
    let bb = BoundingBox::of(points.iter().copied()).unwrap();
    let span = bb.width().max(bb.height()).max(1e-300);
    let (cx, cy) = (0.5 * (bb.min.x + bb.max.x), 0.5 * (bb.min.y + bb.max.y));
    let big = 1e3 * span;
    let mut pts = points.to_vec();
    pts.push(Point::new(cx - 2.0 * big, cy - big));
    pts.push(Point::new(cx + 2.0 * big, cy - big));
    pts.push(Point::new(cx, cy + 2.0 * big));

    let mut tris = vec![Tri {
        v: [n, n + 1, n + 2],
        nbr: [None; 3],
        alive: true,
    }];
    let mut stamp = vec![0usize; 1];
    let mut last = 0usize;

    let mut bad = Vec::new();
    let mut stack = Vec::new();
    let mut boundary: Vec<(usize, usize, Option<usize>)> = Vec::new();

    for pi in 0..n {
        let p = pts[pi];
        let start = locate(&tris, &pts, last, p).ok_or(MeshError::DegenerateInsertion(pi))?;
        let visit = pi + 1;
        bad.clear();
        stack.clear();
        stack.push(start);
        stamp[start] = visit;
        while let Some(t) = stack.pop() {
            bad.push(t);
            for k in 0..3 {
                if let Some(nb) = tris[t].nbr[k] {
                    if stamp[nb] != visit {
                        stamp[nb] = visit;
                        let [a, b, c] = tris[nb].v;
                        if incircle(pts[a], pts[b], pts[c], p) > 0.0 {
                            stack.push(nb);
                        }
                    }
                }
            }
        }
        boundary.clear();
        // a point on a cavity edge can be rejected by the tolerant incircle
        // test; absorb the neighbour until every boundary edge sees p
        loop {
            boundary.clear();
            for &t in &bad {
                for k in 0..3 {
                    let nb = tris[t].nbr[k];
                    if nb.is_none_or(|nb| !bad.contains(&nb)) {
                        let v = tris[t].v;
                        boundary.push((v[(k + 1) % 3], v[(k + 2) % 3], nb));
                    }
                }
            }
            let blocked = boundary
                .iter()
                .find(|&&(a, b, nb)| nb.is_some() && orient(pts[a], pts[b], p) <= 0.0)
                .and_then(|&(_, _, nb)| nb);
            match blocked {
                Some(nb) => bad.push(nb),
                None => break,
            }
        }

        for &t in &bad {
            tris[t].alive = false;
        }
        let first_new = tris.len();
        for &(a, b, _) in &boundary {
            if orient(pts[a], pts[b], p) <= 0.0 {
                return Err(MeshError::DegenerateInsertion(pi));
            }
        }
        for &(a, b, outer) in &boundary {
            let t = tris.len();
            tris.push(Tri {
                v: [a, b, pi],
                nbr: [None, None, outer],
                alive: true,
            });
            stamp.push(0);
            if let Some(o) = outer {
                for k in 0..3 {
                    if let Some(x) = tris[o].nbr[k] {
                        if !tris[x].alive {
                            let ov = tris[o].v;
                            let (ea, eb) = (ov[(k + 1) % 3], ov[(k + 2) % 3]);
                            if (ea == b && eb == a) || (ea == a && eb == b) {
                                tris[o].nbr[k] = Some(t);
                            }
                        }
                    }
                }
            }
        }
        // link the fan around pi: triangle (a, b, pi) meets (b, c, pi) across (b, pi)
        let new_range = first_new..tris.len();
        for t in new_range.clone() {
            let [a, b, _] = tris[t].v;
            for u in new_range.clone() {
                if u == t {
                    continue;
                }
                let [ua, ub, _] = tris[u].v;
                if ua == b {
                    tris[t].nbr[0] = Some(u);
                }
                if ub == a {
                    tris[t].nbr[1] = Some(u);
                }
            }
        }
        last = first_new;
    }

    Ok(tris
        .iter()
        .filter(|t| t.alive && t.v.iter().all(|&v| v < n))
        .map(|t| t.v)
        .collect())
}

/// Visibility walk towards `p`, falling back to a linear scan.
fn locate(tris: &[Tri], pts: &[Point], start: usize, p: Point) -> Option<usize> {
    let mut t = if tris[start].alive {
        start
    } else {
        tris.iter().rposition(|t| t.alive)?
    };
    let limit = 4 * tris.len() + 16;
    let mut prev = usize::MAX;
    'walk: for _ in 0..limit {
        let v = tris[t].v;
        for k in 0..3 {
            let (a, b) = (pts[v[(k + 1) % 3]], pts[v[(k + 2) % 3]]);
            if orient(a, b, p) < 0.0 {
                match tris[t].nbr[k] {
                    Some(nb) if nb == prev => break 'walk,
                    Some(nb) => {
                        prev = t;
                        t = nb;
                        continue 'walk;
                    }
                    None => return None,
                }
            }
        }
        return Some(t);
    }
    // rounding can put a point on a shared edge outside both triangles;
    // take the triangle it violates least
    tris.iter()
        .enumerate()
        .filter(|(_, tr)| tr.alive)
        .map(|(i, tr)| {
            let v = tr.v;
            let worst = (0..3)
                .map(|k| orient(pts[v[(k + 1) % 3]], pts[v[(k + 2) % 3]], p))
                .fold(f64::INFINITY, f64::min);
            (i, worst)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}
