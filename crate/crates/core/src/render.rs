//! Static SVG rendering of a run: world markers plus one route polyline per
//! agent, taken from the trace.

use std::fmt::Write as _;

use crate::scenario::Bounds;
use crate::sim::RunOutcome;
use crate::world::{Point2D, SystemState};

/// Default per-agent route colors, in agent-id order.
const COLORS: [&str; 6] = ["red", "blue", "green", "orange", "purple", "teal"];

const VIEW_W: f64 = 1000.0;
const MARGIN: f64 = 20.0;

struct Mapper {
    bounds: Bounds,
    scale: f64,
    height: f64,
}

impl Mapper {
    fn new(bounds: Bounds) -> Self {
        let w = (bounds.max.x - bounds.min.x).max(1.0);
        let h = (bounds.max.y - bounds.min.y).max(1.0);
        let scale = VIEW_W / w;
        Self {
            bounds,
            scale,
            height: h * scale,
        }
    }

    /// World to screen; the y axis flips so north stays up.
    fn map(&self, p: Point2D) -> (f64, f64) {
        (
            MARGIN + (p.x - self.bounds.min.x) * self.scale,
            MARGIN + self.height - (p.y - self.bounds.min.y) * self.scale,
        )
    }
}

fn fmt(v: f64) -> String {
    format!("{:.2}", v)
}

/// Renders the final world plus each agent's traced path.
pub fn render_svg(bounds: Bounds, state: &SystemState, outcome: &RunOutcome) -> String {
    let m = Mapper::new(bounds);
    let width = VIEW_W + 2.0 * MARGIN;
    let height = m.height + 2.0 * MARGIN;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {} {}">"#,
        fmt(width),
        fmt(height)
    );
    let _ = writeln!(
        svg,
        r#"  <rect x="0" y="0" width="{}" height="{}" fill="white"/>"#,
        fmt(width),
        fmt(height)
    );

    for obstacle in &state.obstacles {
        let (x0, y1) = m.map(obstacle.min);
        let (x1, y0) = m.map(obstacle.max);
        let _ = writeln!(
            svg,
            r#"  <rect x="{}" y="{}" width="{}" height="{}" fill="gray" fill-opacity="0.4"/>"#,
            fmt(x0),
            fmt(y0),
            fmt(x1 - x0),
            fmt(y1 - y0)
        );
    }

    for (i, (agent_id, _)) in state.agents.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = outcome
            .trace
            .iter()
            .filter_map(|record| record.agents.get(agent_id))
            .map(|row| {
                let (x, y) = m.map(row.position);
                format!("{},{}", fmt(x), fmt(y))
            })
            .collect();
        if points.len() > 1 {
            let _ = writeln!(
                svg,
                r#"  <polyline points="{}" fill="none" stroke="{}" stroke-width="2" stroke-opacity="0.8"/>"#,
                points.join(" "),
                color
            );
        }
    }

    for depot in state.depots.values() {
        let (x, y) = m.map(depot.position);
        let _ = writeln!(
            svg,
            r#"  <rect x="{}" y="{}" width="12" height="12" fill="black"/>"#,
            fmt(x - 6.0),
            fmt(y - 6.0)
        );
        let _ = writeln!(
            svg,
            r#"  <text x="{}" y="{}" font-size="12">{}</text>"#,
            fmt(x + 8.0),
            fmt(y - 8.0),
            depot.id
        );
    }
    for client in state.clients.values() {
        let (x, y) = m.map(client.position);
        let _ = writeln!(
            svg,
            r#"  <circle cx="{}" cy="{}" r="6" fill="none" stroke="black" stroke-width="2"/>"#,
            fmt(x),
            fmt(y)
        );
        let _ = writeln!(
            svg,
            r#"  <text x="{}" y="{}" font-size="12">{}</text>"#,
            fmt(x + 8.0),
            fmt(y - 8.0),
            client.id
        );
    }
    for charger in state.chargers.values() {
        let (x, y) = m.map(charger.position);
        let _ = writeln!(
            svg,
            r#"  <polygon points="{},{} {},{} {},{}" fill="goldenrod"/>"#,
            fmt(x),
            fmt(y - 7.0),
            fmt(x - 6.0),
            fmt(y + 5.0),
            fmt(x + 6.0),
            fmt(y + 5.0)
        );
        let _ = writeln!(
            svg,
            r#"  <text x="{}" y="{}" font-size="12">{}</text>"#,
            fmt(x + 8.0),
            fmt(y - 8.0),
            charger.id
        );
    }

    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;
    use crate::sim::Simulation;

    #[test]
    fn svg_contains_markers_and_a_polyline_per_moving_agent() {
        let doc = parse_scenario(
            &serde_json::json!({
                "world": {
                    "bounds": { "min": {"x": 0.0, "y": 0.0}, "max": {"x": 100.0, "y": 100.0} },
                    "chargers": [ { "id": "C1", "position": {"x": 50.0, "y": 50.0} } ],
                    "obstacles": [ { "min": {"x": 40.0, "y": 40.0}, "max": {"x": 60.0, "y": 60.0} } ]
                },
                "articles": [ { "id": "Art1" } ],
                "depots": [ { "id": "S1", "position": {"x": 10.0, "y": 10.0}, "stock": { "Art1": 10 } } ],
                "clients": [ { "id": "T1", "position": {"x": 90.0, "y": 10.0} } ],
                "agents": [ {
                    "id": "A1",
                    "start": {"x": 0.0, "y": 0.0},
                    "battery_capacity": 1000.0,
                    "speed": 10.0,
                    "consumption": 0.1,
                    "constraints": [
                        { "kind": "distance", "coefficient": 1.0 },
                        { "kind": "obstacles", "coefficient": 1.0 }
                    ]
                } ],
                "requests": [ { "id": 1, "depot": "S1", "article": "Art1", "client": "T1",
                                "quantity": 10, "agent": "A1" } ]
            })
            .to_string(),
        )
        .unwrap();
        let bounds = doc.world.bounds;
        let outcome = Simulation::from_scenario(&doc).run().unwrap();
        let svg = render_svg(bounds, &outcome.final_state, &outcome);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("<circle"));
        assert!(svg.contains("<polygon"));
        assert!(svg.contains("fill-opacity=\"0.4\""), "obstacle rect missing");
        assert!(svg.contains("stroke=\"red\""), "first agent is red");
    }
}
