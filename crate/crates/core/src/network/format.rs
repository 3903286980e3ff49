//! Line-oriented network file format.
//!
//! ```text
//! # comment
//! node <id> <station|capacitor|fork|join|plain> [<x> <y>]
//! segment <id> <from> <to> <length_m> <road|highway> [vmax=<m/s>]
//! station <node-id> berths=<int>
//! capacitor <node-id> capacity=<int>
//! ```

use std::fmt::Write as _;

use super::{Network, NetworkBuilder, NetworkError, NodeKind, SegmentClass};

fn syntax(line: usize, message: impl Into<String>) -> NetworkError {
    NetworkError::Syntax {
        line,
        message: message.into(),
    }
}

fn parse_f64(line: usize, what: &str, s: &str) -> Result<f64, NetworkError> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| syntax(line, format!("invalid {what} `{s}`")))
}

fn parse_kv<'a>(line: usize, key: &str, tok: &'a str) -> Result<&'a str, NetworkError> {
    tok.strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| syntax(line, format!("expected `{key}=<value>`, got `{tok}`")))
}

fn parse_count(line: usize, key: &str, tok: &str) -> Result<u32, NetworkError> {
    let v = parse_kv(line, key, tok)?;
    v.parse::<u32>()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| syntax(line, format!("invalid {key} `{v}`")))
}

pub fn parse_network(text: &str) -> Result<Network, NetworkError> {
    let mut b = NetworkBuilder::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        match toks[0] {
            "node" => {
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(syntax(line, "expected `node <id> <kind> [<x> <y>]`"));
                }
                let kind = match toks[2] {
                    "station" => NodeKind::Station,
                    "capacitor" => NodeKind::Capacitor,
                    "fork" => NodeKind::Fork,
                    "join" => NodeKind::Join,
                    "plain" => NodeKind::Plain,
                    k => return Err(syntax(line, format!("unknown node kind `{k}`"))),
                };
                let pos = if toks.len() == 5 {
                    Some((parse_f64(line, "x", toks[3])?, parse_f64(line, "y", toks[4])?))
                } else {
                    None
                };
                b.node(toks[1], kind, pos);
            }
            "segment" => {
                if toks.len() != 6 && toks.len() != 7 {
                    return Err(syntax(
                        line,
                        "expected `segment <id> <from> <to> <length_m> <road|highway> [vmax=<m/s>]`",
                    ));
                }
                let length = parse_f64(line, "length", toks[4])?;
                let class = match toks[5] {
                    "road" => SegmentClass::Road,
                    "highway" => SegmentClass::Highway,
                    c => return Err(syntax(line, format!("unknown segment class `{c}`"))),
                };
                let vmax = match toks.get(6) {
                    Some(t) => Some(parse_f64(line, "vmax", parse_kv(line, "vmax", t)?)?),
                    None => None,
                };
                b.segment(toks[1], toks[2], toks[3], length, class, vmax);
            }
            "station" => {
                if toks.len() != 3 {
                    return Err(syntax(line, "expected `station <node-id> berths=<int>`"));
                }
                let berths = parse_count(line, "berths", toks[2])?;
                b.station(toks[1], berths);
            }
            "capacitor" => {
                if toks.len() != 3 {
                    return Err(syntax(line, "expected `capacitor <node-id> capacity=<int>`"));
                }
                let cap = parse_count(line, "capacity", toks[2])?;
                b.capacitor(toks[1], cap);
            }
            other => return Err(syntax(line, format!("unknown declaration `{other}`"))),
        }
    }
    b.build()
}

/// Serializes a network so that `parse_network(&emit_network(n)) == n`.
pub fn emit_network(net: &Network) -> String {
    let mut out = String::new();
    for n in net.nodes() {
        match n.pos {
            Some((x, y)) => writeln!(out, "node {} {} {} {}", n.id, n.kind, x, y),
            None => writeln!(out, "node {} {}", n.id, n.kind),
        }
        .unwrap();
    }
    for s in net.segments() {
        let from = &net.node(s.from).id;
        let to = &net.node(s.to).id;
        write!(out, "segment {} {} {} {} {}", s.id, from, to, s.length, s.class).unwrap();
        if s.v_max != s.class.default_vmax() {
            write!(out, " vmax={}", s.v_max).unwrap();
        }
        out.push('\n');
    }
    for (n, spec) in net.stations() {
        writeln!(out, "station {} berths={}", net.node(*n).id, spec.berths).unwrap();
    }
    for (n, spec) in net.capacitors() {
        writeln!(out, "capacitor {} capacity={}", net.node(*n).id, spec.capacity).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "node a station\nnode b station\nsegment s1 a b 500 road\nsegment s2 b a 500 road\n";

    #[test]
    fn parses_minimal_file() {
        let net = parse_network(MINIMAL).unwrap();
        assert_eq!(net.node_count(), 2);
        assert_eq!(net.segment_count(), 2);
        let s1 = net.segment(net.segment_by_id("s1").unwrap());
        assert_eq!(s1.length, 500.0);
        assert_eq!(s1.v_max, 10.0);
    }

    #[test]
    fn highway_next_to_station_rejected() {
        let text = MINIMAL.replace("segment s1 a b 500 road", "segment s1 a b 500 highway");
        assert!(matches!(
            parse_network(&text),
            Err(NetworkError::HighwayAtTerminal { .. })
        ));
    }

    #[test]
    fn x_intersection_rejected() {
        // node x has two incoming and two outgoing segments
        let text = "\
node a station
node b station
node c plain
node d plain
node x join
segment s1 a x 100 road
segment s2 c x 100 road
segment s3 x b 100 road
segment s4 x d 100 road
segment s5 b c 100 road
segment s6 d a 100 road
";
        match parse_network(text) {
            Err(NetworkError::Degree { node, in_deg, out_deg, .. }) => {
                assert_eq!((node.as_str(), in_deg, out_deg), ("x", 2, 2));
            }
            other => panic!("expected degree error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_line() {
        let text = "node a station\n# fine\nnode b stashun\n";
        assert_eq!(
            parse_network(text),
            Err(NetworkError::Syntax {
                line: 3,
                message: "unknown node kind `stashun`".into()
            })
        );
        let text = "node a station\nsegment s1 a b fivehundred road\n";
        assert!(matches!(parse_network(text), Err(NetworkError::Syntax { line: 2, .. })));
    }

    #[test]
    fn duplicate_segment_rejected() {
        let text = format!("{MINIMAL}segment s1 a b 300 road\n");
        assert!(matches!(
            parse_network(&text),
            Err(NetworkError::DuplicateId { what: "segment", .. })
        ));
    }

    #[test]
    fn comments_coordinates_and_overrides() {
        let text = "\
# two stations
node a station 0 0   # origin
node b station 500.5 -1e3
segment s1 a b 500 road vmax=5
segment s2 b a 500 road
station a berths=3
";
        let net = parse_network(text).unwrap();
        let a = net.node_by_id("a").unwrap();
        assert_eq!(net.node(a).pos, Some((0.0, 0.0)));
        assert_eq!(net.stations()[&a].berths, 3);
        let s1 = net.segment(net.segment_by_id("s1").unwrap());
        assert_eq!(s1.v_max, 5.0);
        let back = parse_network(&emit_network(&net)).unwrap();
        assert_eq!(back, net);
    }
}
