//! Plain-text road maps.
//!
//! ```text
//! # comments start with '#'
//! [area]
//! 1000 1000
//! [nodes]
//! 75 75          # node 0: x y
//! 245 80         # node 1
//! [edges]
//! 0 1            # undirected road between node ids
//! [landmarks]
//! Pond 150 690 50 0.5   # name x y radius terrain
//! ```
//!
//! `[area]` is optional and defaults to 1000 × 1000 m. Node ids are the
//! zero-based order of the `[nodes]` lines. Landmark names are single words.

use std::fmt::Write as _;
use std::path::Path;

use sketchsearch_core::world::{Landmark, RoadNetwork, WorldError};
use sketchsearch_core::Point2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid map: {0}")]
    Invalid(WorldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Area,
    Nodes,
    Edges,
    Landmarks,
}

fn numbers(fields: &[&str], line: usize) -> Result<Vec<f64>, MapError> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| MapError::Syntax { line, message: format!("'{f}' is not a finite number") })
        })
        .collect()
}

fn expect_len(fields: &[&str], n: usize, line: usize, what: &str) -> Result<(), MapError> {
    if fields.len() == n {
        Ok(())
    } else {
        Err(MapError::Syntax { line, message: format!("{what} needs {n} fields, found {}", fields.len()) })
    }
}

/// Parses a map from its text form.
pub fn parse_map(text: &str) -> Result<RoadNetwork, MapError> {
    let mut section = Section::None;
    let (mut width, mut height) = (1000.0, 1000.0);
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut landmarks = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content.starts_with('[') {
            section = match content {
                "[area]" => Section::Area,
                "[nodes]" => Section::Nodes,
                "[edges]" => Section::Edges,
                "[landmarks]" => Section::Landmarks,
                other => return Err(MapError::Syntax { line, message: format!("unknown section {other}") }),
            };
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        match section {
            Section::None => {
                return Err(MapError::Syntax { line, message: "data before the first section".into() });
            }
            Section::Area => {
                expect_len(&fields, 2, line, "area")?;
                let v = numbers(&fields, line)?;
                (width, height) = (v[0], v[1]);
            }
            Section::Nodes => {
                expect_len(&fields, 2, line, "node")?;
                let v = numbers(&fields, line)?;
                nodes.push(Point2::new(v[0], v[1]));
            }
            Section::Edges => {
                expect_len(&fields, 2, line, "edge")?;
                let ids: Result<Vec<usize>, _> = fields.iter().map(|f| f.parse::<usize>()).collect();
                let ids = ids.map_err(|_| MapError::Syntax { line, message: "edge ids must be node indices".into() })?;
                edges.push((ids[0], ids[1]));
            }
            Section::Landmarks => {
                expect_len(&fields, 5, line, "landmark")?;
                let v = numbers(&fields[1..], line)?;
                landmarks.push(Landmark {
                    name: fields[0].to_string(),
                    centroid: Point2::new(v[0], v[1]),
                    radius: v[2],
                    terrain: v[3],
                });
            }
        }
    }
    RoadNetwork::new(nodes, &edges, landmarks, width, height).map_err(MapError::Invalid)
}

/// Reads and parses a map file.
pub fn load_map(path: &Path) -> Result<RoadNetwork, MapError> {
    parse_map(&std::fs::read_to_string(path)?)
}

/// Text form of a map; parsing it back yields an equal network.
pub fn format_map(net: &RoadNetwork) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[area]\n{} {}", net.width(), net.height());
    out.push_str("[nodes]\n");
    for p in net.nodes() {
        let _ = writeln!(out, "{:?} {:?}", p.x, p.y);
    }
    out.push_str("[edges]\n");
    for e in net.edges() {
        let _ = writeln!(out, "{} {}", e.a, e.b);
    }
    out.push_str("[landmarks]\n");
    for l in net.landmarks() {
        let _ = writeln!(out, "{} {:?} {:?} {:?} {:?}", l.name, l.centroid.x, l.centroid.y, l.radius, l.terrain);
    }
    out
}

/// Reads a point list, one `x y` pair per line (`#` comments allowed).
pub fn parse_points(text: &str) -> Result<Vec<Point2>, MapError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split(|c: char| c.is_whitespace() || c == ',').filter(|f| !f.is_empty()).collect();
        expect_len(&fields, 2, i + 1, "point")?;
        let v = numbers(&fields, i + 1)?;
        out.push(Point2::new(v[0], v[1]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_map_round_trips() {
        let net = RoadNetwork::default_map();
        let text = format_map(&net);
        assert_eq!(parse_map(&text).unwrap(), net);
    }

    #[test]
    fn bundled_map_is_the_default() {
        let text = include_str!("../assets/default.map");
        assert_eq!(parse_map(text).unwrap(), RoadNetwork::default_map());
    }

    #[test]
    fn small_map_parses() {
        let text = "# tiny\n[nodes]\n0 0\n100 0 # east\n[edges]\n0 1\n[landmarks]\nRock 50 50 20 1.0\n";
        let net = parse_map(text).unwrap();
        assert_eq!(net.nodes().len(), 2);
        assert_eq!(net.landmarks()[0].name, "Rock");
        assert_eq!(net.width(), 1000.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_map("[nodes]\n0 0\n1 x\n").unwrap_err();
        assert!(matches!(err, MapError::Syntax { line: 3, .. }), "{err}");
        assert!(matches!(parse_map("0 0\n"), Err(MapError::Syntax { line: 1, .. })));
        assert!(matches!(parse_map("[roads]\n"), Err(MapError::Syntax { line: 1, .. })));
    }

    #[test]
    fn disconnected_map_rejected() {
        let text = "[nodes]\n0 0\n100 0\n200 0\n[edges]\n0 1\n";
        assert!(matches!(parse_map(text), Err(MapError::Invalid(WorldError::Disconnected))));
    }

    #[test]
    fn points_accept_commas_and_comments() {
        let pts = parse_points("# stroke\n1 2\n3.5, 4\n\n").unwrap();
        assert_eq!(pts, vec![Point2::new(1.0, 2.0), Point2::new(3.5, 4.0)]);
    }
}
