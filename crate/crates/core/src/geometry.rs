//! Planar geometry shared by the mesher, the distance covariates and the
//! areal adjacency builder. Coordinates are treated as Euclidean.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Twice the signed area of `(a, b, c)`; positive when counter-clockwise.
pub fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub const fn new(a: Point, b: Point) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> f64 {
        self.a.dist(self.b)
    }

    /// Euclidean distance with the projection clamped onto the segment.
    pub fn distance_to(&self, p: Point) -> f64 {
        let (dx, dy) = (self.b.x - self.a.x, self.b.y - self.a.y);
        let len2 = dx * dx + dy * dy;
        if len2 == 0.0 {
            return p.dist(self.a);
        }
        let t = (((p.x - self.a.x) * dx + (p.y - self.a.y) * dy) / len2).clamp(0.0, 1.0);
        p.dist(Point::new(self.a.x + t * dx, self.a.y + t * dy))
    }
}

/// Signed area of a ring given without the closing duplicate vertex.
pub fn ring_signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    let mut s = 0.0;
    for i in 0..n {
        let (p, q) = (ring[i], ring[(i + 1) % n]);
        s += p.x * q.y - q.x * p.y;
    }
    0.5 * s
}

fn ring_contains(ring: &[Point], p: Point) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: Point,
    pub max: Point,
}

impl BoundingBox {
    pub fn of(points: impl IntoIterator<Item = Point>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut bb = Self { min: first, max: first };
        for p in it {
            bb.min.x = bb.min.x.min(p.x);
            bb.min.y = bb.min.y.min(p.y);
            bb.max.x = bb.max.x.max(p.x);
            bb.max.y = bb.max.y.max(p.y);
        }
        Some(bb)
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn expanded(&self, by: f64) -> Self {
        Self {
            min: Point::new(self.min.x - by, self.min.y - by),
            max: Point::new(self.max.x + by, self.max.y + by),
        }
    }
}

/// Simple polygon with optional holes. Rings are stored open (no repeated
/// closing vertex).
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub exterior: Vec<Point>,
    pub holes: Vec<Vec<Point>>,
}

impl Polygon {
    pub fn new(exterior: Vec<Point>) -> Self {
        Self {
            exterior,
            holes: Vec::new(),
        }
    }

    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new(vec![
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ])
    }

    pub fn unit_square() -> Self {
        Self::rectangle(0.0, 0.0, 1.0, 1.0)
    }

    pub fn rings(&self) -> impl Iterator<Item = &Vec<Point>> {
        std::iter::once(&self.exterior).chain(self.holes.iter())
    }

    pub fn area(&self) -> f64 {
        ring_signed_area(&self.exterior).abs() - self.holes.iter().map(|h| ring_signed_area(h).abs()).sum::<f64>()
    }

    pub fn contains(&self, p: Point) -> bool {
        ring_contains(&self.exterior, p) && !self.holes.iter().any(|h| ring_contains(h, p))
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        self.rings().flat_map(|r| {
            let n = r.len();
            (0..n).map(move |i| Segment::new(r[i], r[(i + 1) % n]))
        })
    }

    pub fn boundary_distance(&self, p: Point) -> f64 {
        self.segments().map(|s| s.distance_to(p)).fold(f64::INFINITY, f64::min)
    }

    /// Zero inside the polygon, otherwise the distance to its boundary.
    pub fn distance(&self, p: Point) -> f64 {
        if self.contains(p) {
            0.0
        } else {
            self.boundary_distance(p)
        }
    }

    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::of(self.exterior.iter().copied()).expect("polygon has vertices")
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        let shift = |r: &Vec<Point>| r.iter().map(|p| Point::new(p.x + dx, p.y + dy)).collect();
        Self {
            exterior: shift(&self.exterior),
            holes: self.holes.iter().map(shift).collect(),
        }
    }

    pub fn reversed(&self) -> Self {
        let rev = |r: &Vec<Point>| r.iter().rev().copied().collect();
        Self {
            exterior: rev(&self.exterior),
            holes: self.holes.iter().map(rev).collect(),
        }
    }
}
