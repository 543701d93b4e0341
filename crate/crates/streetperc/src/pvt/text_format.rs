//! Line-oriented text serialization of a tessellation.
//!
//! Layout (whitespace-separated, one record per line):
//!
//! ```text
//! tessellation d=2
//! window <minx> <miny> <maxx> <maxy>
//! intensity <lambda_s>
//! stream <master_seed> <stream_id>
//! counts <seeds> <vertices> <edges>
//! s <x> <y>
//! v <id> <x> <y> <interior 0|1> <incident edge ids...>
//! e <id> <endA> <endB> <ax> <ay> <bx> <by> <clipped 0|1> <gen0> <gen1>
//! ```
//!
//! Edge ends are `v<k>` for a crossroad or `b` for a window-boundary cut
//! (the coordinates carry the position either way). Floats use the shortest
//! round-trip decimal form, so write -> parse -> write is byte-stable.

use std::fmt::Write as _;

use crate::geometry::{Point, RngStream, Segment, Window};

use super::{fingerprint_of, Edge, EdgeEnd, PvtError, SeedSet, Tessellation, Vertex};

impl Tessellation {
    /// Serialize to the line-oriented text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let w = self.window;
        out.push_str("tessellation d=2\n");
        let _ = writeln!(
            out,
            "window {} {} {} {}",
            w.min().x,
            w.min().y,
            w.max().x,
            w.max().y
        );
        let _ = writeln!(out, "intensity {}", self.seeds.intensity);
        let _ = writeln!(
            out,
            "stream {} {}",
            self.seeds.stream.master_seed, self.seeds.stream.stream_id
        );
        let _ = writeln!(
            out,
            "counts {} {} {}",
            self.seeds.points.len(),
            self.vertices.len(),
            self.edges.len()
        );
        for p in &self.seeds.points {
            let _ = writeln!(out, "s {} {}", p.x, p.y);
        }
        for (id, v) in self.vertices.iter().enumerate() {
            let _ = write!(
                out,
                "v {} {} {} {}",
                id,
                v.position.x,
                v.position.y,
                u8::from(v.is_interior)
            );
            for e in &v.incident_edges {
                let _ = write!(out, " {e}");
            }
            out.push('\n');
        }
        for (id, e) in self.edges.iter().enumerate() {
            let _ = writeln!(
                out,
                "e {} {} {} {} {} {} {} {} {} {}",
                id,
                end_token(&e.ends.0),
                end_token(&e.ends.1),
                e.geometry.a().x,
                e.geometry.a().y,
                e.geometry.b().x,
                e.geometry.b().y,
                u8::from(e.is_clipped),
                e.generators.0,
                e.generators.1
            );
        }
        out
    }

    /// Parse the text format back into a tessellation.
    pub fn from_text(text: &str) -> Result<Tessellation, PvtError> {
        let mut parser = Parser {
            lines: text.lines().enumerate(),
        };
        parser.parse()
    }
}

fn end_token(end: &EdgeEnd) -> String {
    match end {
        EdgeEnd::Vertex(v) => format!("v{v}"),
        EdgeEnd::Boundary(_) => "b".to_string(),
    }
}

struct Parser<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Parser<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str), PvtError> {
        self.lines
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| PvtError::Parse {
                line: 0,
                msg: "unexpected end of input".into(),
            })
    }

    fn parse(&mut self) -> Result<Tessellation, PvtError> {
        let (ln, header) = self.next_line()?;
        if header.trim() != "tessellation d=2" {
            return Err(err(ln, "expected header 'tessellation d=2'"));
        }

        let (ln, line) = self.next_line()?;
        let w: Vec<f64> = tagged_floats(line, "window", 4, ln)?;
        let window = Window::new(Point::new(w[0], w[1]), Point::new(w[2], w[3]))
            .map_err(|e| err(ln, &e.to_string()))?;

        let (ln, line) = self.next_line()?;
        let intensity = tagged_floats(line, "intensity", 1, ln)?[0];

        let (ln, line) = self.next_line()?;
        let s: Vec<u64> = tagged_ints(line, "stream", 2, ln)?;
        let stream = RngStream::new(s[0], s[1]);

        let (ln, line) = self.next_line()?;
        let counts: Vec<u64> = tagged_ints(line, "counts", 3, ln)?;
        let (n_seeds, n_vertices, n_edges) =
            (counts[0] as usize, counts[1] as usize, counts[2] as usize);

        let mut points = Vec::with_capacity(n_seeds);
        for _ in 0..n_seeds {
            let (ln, line) = self.next_line()?;
            let xy = tagged_floats(line, "s", 2, ln)?;
            points.push(Point::try_new(xy[0], xy[1]).map_err(|e| err(ln, &e.to_string()))?);
        }

        let mut vertices = Vec::with_capacity(n_vertices);
        for want in 0..n_vertices {
            let (ln, line) = self.next_line()?;
            let mut it = line.split_whitespace();
            expect_tag(&mut it, "v", ln)?;
            let id: usize = field(&mut it, ln)?;
            if id != want {
                return Err(err(ln, "vertex ids must be sequential"));
            }
            let x: f64 = field(&mut it, ln)?;
            let y: f64 = field(&mut it, ln)?;
            let interior: u8 = field(&mut it, ln)?;
            let incident: Vec<usize> = it
                .map(|t| t.parse().map_err(|_| err(ln, "bad incident edge id")))
                .collect::<Result<_, _>>()?;
            if incident.iter().any(|&e| e >= n_edges) {
                return Err(err(ln, "incident edge id out of range"));
            }
            vertices.push(Vertex {
                position: Point::try_new(x, y).map_err(|e| err(ln, &e.to_string()))?,
                incident_edges: incident,
                is_interior: interior == 1,
            });
        }

        let mut edges = Vec::with_capacity(n_edges);
        for want in 0..n_edges {
            let (ln, line) = self.next_line()?;
            let mut it = line.split_whitespace();
            expect_tag(&mut it, "e", ln)?;
            let id: usize = field(&mut it, ln)?;
            if id != want {
                return Err(err(ln, "edge ids must be sequential"));
            }
            let end_a_tok: String = field(&mut it, ln)?;
            let end_b_tok: String = field(&mut it, ln)?;
            let ax: f64 = field(&mut it, ln)?;
            let ay: f64 = field(&mut it, ln)?;
            let bx: f64 = field(&mut it, ln)?;
            let by: f64 = field(&mut it, ln)?;
            let clipped: u8 = field(&mut it, ln)?;
            let g0: usize = field(&mut it, ln)?;
            let g1: usize = field(&mut it, ln)?;
            if g0 >= n_seeds || g1 >= n_seeds {
                return Err(err(ln, "generator seed id out of range"));
            }
            let a = Point::try_new(ax, ay).map_err(|e| err(ln, &e.to_string()))?;
            let b = Point::try_new(bx, by).map_err(|e| err(ln, &e.to_string()))?;
            let geometry = Segment::new(a, b).map_err(|e| err(ln, &e.to_string()))?;
            let parse_end = |tok: &str, p: Point| -> Result<EdgeEnd, PvtError> {
                if tok == "b" {
                    Ok(EdgeEnd::Boundary(p))
                } else if let Some(v) = tok.strip_prefix('v') {
                    let v: usize = v.parse().map_err(|_| err(ln, "bad vertex reference"))?;
                    if v >= n_vertices {
                        return Err(err(ln, "vertex reference out of range"));
                    }
                    Ok(EdgeEnd::Vertex(v))
                } else {
                    Err(err(ln, "edge end must be 'v<id>' or 'b'"))
                }
            };
            edges.push(Edge {
                ends: (parse_end(&end_a_tok, a)?, parse_end(&end_b_tok, b)?),
                length: geometry.length(),
                geometry,
                is_clipped: clipped == 1,
                generators: (g0, g1),
            });
        }

        let seeds = SeedSet {
            window,
            intensity,
            points,
            stream,
        };
        let fingerprint = fingerprint_of(&seeds, vertices.len(), edges.len());
        Ok(Tessellation {
            seeds,
            vertices,
            edges,
            window,
            fingerprint,
        })
    }
}

fn err(line: usize, msg: &str) -> PvtError {
    PvtError::Parse {
        line,
        msg: msg.to_string(),
    }
}

fn expect_tag(it: &mut std::str::SplitWhitespace, tag: &str, ln: usize) -> Result<(), PvtError> {
    match it.next() {
        Some(t) if t == tag => Ok(()),
        _ => Err(err(ln, &format!("expected record tag '{tag}'"))),
    }
}

fn field<T: std::str::FromStr>(
    it: &mut std::str::SplitWhitespace,
    ln: usize,
) -> Result<T, PvtError> {
    it.next()
        .ok_or_else(|| err(ln, "missing field"))?
        .parse()
        .map_err(|_| err(ln, "malformed field"))
}

fn tagged_floats(line: &str, tag: &str, n: usize, ln: usize) -> Result<Vec<f64>, PvtError> {
    let mut it = line.split_whitespace();
    expect_tag(&mut it, tag, ln)?;
    let vals: Vec<f64> = it
        .map(|t| t.parse().map_err(|_| err(ln, "malformed number")))
        .collect::<Result<_, _>>()?;
    if vals.len() != n {
        return Err(err(ln, &format!("expected {n} numeric fields")));
    }
    Ok(vals)
}

fn tagged_ints(line: &str, tag: &str, n: usize, ln: usize) -> Result<Vec<u64>, PvtError> {
    let mut it = line.split_whitespace();
    expect_tag(&mut it, tag, ln)?;
    let vals: Vec<u64> = it
        .map(|t| t.parse().map_err(|_| err(ln, "malformed integer")))
        .collect::<Result<_, _>>()?;
    if vals.len() != n {
        return Err(err(ln, &format!("expected {n} integer fields")));
    }
    Ok(vals)
}
