//! Minimal GeoJSON reading for study windows, source polylines and region
//! polygons, and FeatureCollection writing for result maps.

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::geometry::{Point, Polygon, Segment};

#[derive(Debug, Error)]
pub enum GeoJsonError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("feature {feature}: {message}")]
    Feature { feature: usize, message: String },
    #[error("document contains no {0} features")]
    Empty(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    /// Polygon or MultiPolygon parts.
    Polygons(Vec<Polygon>),
    /// LineString or MultiLineString parts.
    Lines(Vec<Vec<Point>>),
    Point(Point),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub properties: Map<String, Value>,
    pub geometry: Geometry,
}

fn coord(v: &Value) -> Option<Point> {
    let a = v.as_array()?;
    Some(Point::new(a.first()?.as_f64()?, a.get(1)?.as_f64()?))
}

fn line(v: &Value) -> Option<Vec<Point>> {
    v.as_array()?.iter().map(coord).collect()
}

/// A ring must repeat its first vertex; the stored ring drops the repeat.
fn ring(v: &Value) -> Result<Vec<Point>, String> {
    let mut pts = line(v).ok_or("malformed ring coordinates")?;
    if pts.len() < 4 {
        return Err(format!("ring has {} positions, need at least 4", pts.len()));
    }
    if pts.first() != pts.last() {
        return Err("ring is not closed".into());
    }
    pts.pop();
    Ok(pts)
}

fn polygon(v: &Value) -> Result<Polygon, String> {
    let rings = v.as_array().ok_or("malformed polygon coordinates")?;
    let mut it = rings.iter();
    let exterior = ring(it.next().ok_or("polygon without rings")?)?;
    let holes = it.map(ring).collect::<Result<Vec<_>, _>>()?;
    Ok(Polygon { exterior, holes })
}

fn geometry(g: &Value) -> Result<Geometry, String> {
    let kind = g.get("type").and_then(Value::as_str).ok_or("geometry without type")?;
    let c = g.get("coordinates").ok_or("geometry without coordinates")?;
    match kind {
        "Polygon" => Ok(Geometry::Polygons(vec![polygon(c)?])),
        "MultiPolygon" => Ok(Geometry::Polygons(
            c.as_array()
                .ok_or("malformed coordinates")?
                .iter()
                .map(polygon)
                .collect::<Result<_, _>>()?,
        )),
        "LineString" => Ok(Geometry::Lines(vec![line(c).ok_or("malformed line")?])),
        "MultiLineString" => Ok(Geometry::Lines(
            c.as_array()
                .ok_or("malformed coordinates")?
                .iter()
                .map(|l| line(l).ok_or("malformed line"))
                .collect::<Result<_, _>>()?,
        )),
        "Point" => Ok(Geometry::Point(coord(c).ok_or("malformed point")?)),
        other => Err(format!("unsupported geometry type `{other}`")),
    }
}

/// Features of a FeatureCollection, a single Feature, or a bare geometry.
pub fn read_features(text: &str) -> Result<Vec<Feature>, GeoJsonError> {
    let doc: Value = serde_json::from_str(text)?;
    let raw: Vec<Value> = match doc.get("type").and_then(Value::as_str) {
        Some("FeatureCollection") => doc.get("features").and_then(Value::as_array).cloned().unwrap_or_default(),
        Some("Feature") => vec![doc],
        _ => vec![json!({ "type": "Feature", "properties": {}, "geometry": doc })],
    };
    raw.iter()
        .enumerate()
        .map(|(i, f)| {
            let bad = |message: String| GeoJsonError::Feature { feature: i, message };
            let g = f.get("geometry").ok_or_else(|| bad("feature without geometry".into()))?;
            Ok(Feature {
                properties: f.get("properties").and_then(Value::as_object).cloned().unwrap_or_default(),
                geometry: geometry(g).map_err(bad)?,
            })
        })
        .collect()
}

/// The first polygon found in the document.
pub fn read_window(text: &str) -> Result<Polygon, GeoJsonError> {
    read_features(text)?
        .into_iter()
        .find_map(|f| match f.geometry {
            Geometry::Polygons(mut p) if !p.is_empty() => Some(p.swap_remove(0)),
            _ => None,
        })
        .ok_or(GeoJsonError::Empty("polygon"))
}

/// All line segments of all line features, in document order.
pub fn read_segments(text: &str) -> Result<Vec<Segment>, GeoJsonError> {
    let mut out = Vec::new();
    for f in read_features(text)? {
        if let Geometry::Lines(lines) = f.geometry {
            for l in lines {
                out.extend(l.windows(2).map(|w| Segment::new(w[0], w[1])));
            }
        }
    }
    if out.is_empty() {
        return Err(GeoJsonError::Empty("line"));
    }
    Ok(out)
}

/// `(id, parts)` for every polygon feature, with the id taken from
/// `id_key` (string or number).
pub fn read_regions(text: &str, id_key: &str) -> Result<Vec<(String, Vec<Polygon>)>, GeoJsonError> {
    let mut out = Vec::new();
    for (i, f) in read_features(text)?.into_iter().enumerate() {
        let Geometry::Polygons(parts) = f.geometry else {
            continue;
        };
        let id = match f.properties.get(id_key) {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => {
                return Err(GeoJsonError::Feature {
                    feature: i,
                    message: format!("missing `{id_key}` property"),
                })
            }
        };
        out.push((id, parts));
    }
    if out.is_empty() {
        return Err(GeoJsonError::Empty("polygon"));
    }
    Ok(out)
}

fn ring_value(r: &[Point]) -> Value {
    let mut c: Vec<Value> = r.iter().map(|p| json!([p.x, p.y])).collect();
    if let Some(first) = r.first() {
        c.push(json!([first.x, first.y]));
    }
    Value::Array(c)
}

/// FeatureCollection of (multi)polygons with the given properties.
pub fn polygons_collection(features: &[(Vec<Polygon>, Map<String, Value>)]) -> Value {
    let feats: Vec<Value> = features
        .iter()
        .map(|(parts, props)| {
            let polys: Vec<Value> = parts
                .iter()
                .map(|p| Value::Array(p.rings().map(|r| ring_value(r)).collect()))
                .collect();
            let geometry = if polys.len() == 1 {
                json!({ "type": "Polygon", "coordinates": polys[0] })
            } else {
                json!({ "type": "MultiPolygon", "coordinates": polys })
            };
            json!({ "type": "Feature", "properties": props, "geometry": geometry })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": feats })
}
