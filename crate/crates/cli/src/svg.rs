//! Phase-plane SVG: trajectory polylines colored by class, an optional
//! axis-aligned certificate ellipse, and ticked axes.

use std::fmt::Write;

use pwh_core::sim::IcClass;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 540.0;
const MARGIN: f64 = 70.0;
const MAX_POINTS: usize = 400;

#[derive(Clone, Debug, PartialEq)]
pub struct PhasePlot {
    /// `[(x_lo, x_hi), (y_lo, y_hi)]` in state coordinates.
    pub bounds: [(f64, f64); 2],
    pub labels: [String; 2],
    pub curves: Vec<(IcClass, Vec<[f64; 2]>)>,
    /// Center and semi-axes of the certificate.
    pub ellipse: Option<([f64; 2], [f64; 2])>,
    pub equilibrium: Option<[f64; 2]>,
}

fn color(class: IcClass) -> &'static str {
    match class {
        IcClass::Converged => "#b8b8b8",
        IcClass::Diverged => "#3a3a3a",
        IcClass::Timeout => "#d9822b",
    }
}

impl PhasePlot {
    fn px(&self, p: [f64; 2]) -> (f64, f64) {
        let [(x0, x1), (y0, y1)] = self.bounds;
        let u = MARGIN + (p[0] - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
        let v = HEIGHT - MARGIN - (p[1] - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
        (u, v)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let inner = WIDTH - 2.0 * MARGIN;
        let inner_h = HEIGHT - 2.0 * MARGIN;
        let _ = writeln!(
            s,
            r#"<defs><clipPath id="plot"><rect x="{MARGIN}" y="{MARGIN}" width="{inner}" height="{inner_h}"/></clipPath></defs>"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(s, r##"<g clip-path="url(#plot)" fill="none" stroke-width="1">"##);
        // draw converged first so diverging curves stay visible
        let mut order: Vec<&(IcClass, Vec<[f64; 2]>)> = self.curves.iter().collect();
        order.sort_by_key(|(c, _)| *c != IcClass::Converged);
        for (class, pts) in order {
            if pts.is_empty() {
                continue;
            }
            let stride = pts.len().div_ceil(MAX_POINTS).max(1);
            let mut path = String::new();
            let last = pts.len() - 1;
            for (i, p) in pts.iter().enumerate() {
                if i % stride == 0 || i == last {
                    let (u, v) = self.px(*p);
                    let _ = write!(path, "{u:.2},{v:.2} ");
                }
            }
            let _ = writeln!(s, r#"<polyline stroke="{}" points="{}"/>"#, color(*class), path.trim_end());
        }
        if let Some((c, a)) = self.ellipse {
            let (cu, cv) = self.px(c);
            let [(x0, x1), (y0, y1)] = self.bounds;
            let rx = a[0] / (x1 - x0) * inner;
            let ry = a[1] / (y1 - y0) * inner_h;
            let _ = writeln!(
                s,
                r##"<ellipse cx="{cu:.2}" cy="{cv:.2}" rx="{rx:.2}" ry="{ry:.2}" stroke="#1f5fbf" stroke-width="2" fill="#1f5fbf" fill-opacity="0.12"/>"##
            );
        }
        if let Some(e) = self.equilibrium {
            let (u, v) = self.px(e);
            let _ = writeln!(s, r#"<circle cx="{u:.2}" cy="{v:.2}" r="3" fill="black"/>"#);
        }
        s.push_str("</g>\n");
        self.axes(&mut s);
        s.push_str("</svg>\n");
        s
    }

    fn axes(&self, s: &mut String) {
        let [(x0, x1), (y0, y1)] = self.bounds;
        let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        let _ =
            writeln!(s, r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#, r - l, b - t);
        for k in 0..=5 {
            let f = k as f64 / 5.0;
            let xv = x0 + f * (x1 - x0);
            let u = l + f * (r - l);
            let _ = writeln!(s, r#"<line x1="{u:.2}" y1="{b}" x2="{u:.2}" y2="{}" stroke="black"/>"#, b + 5.0);
            let _ = writeln!(s, r#"<text x="{u:.2}" y="{}" text-anchor="middle">{xv:.3e}</text>"#, b + 18.0);
            let yv = y0 + f * (y1 - y0);
            let v = b - f * (b - t);
            let _ = writeln!(s, r#"<line x1="{}" y1="{v:.2}" x2="{l}" y2="{v:.2}" stroke="black"/>"#, l - 5.0);
            let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{yv:.3e}</text>"#, l - 8.0, v + 4.0);
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 20.0,
            escape(&self.labels[0])
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(&self.labels[1])
        );
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_all_elements() {
        let plot = PhasePlot {
            bounds: [(0.0, 1.0), (0.0, 2.0)],
            labels: ["x1".into(), "x2 <q>".into()],
            curves: vec![
                (IcClass::Converged, vec![[0.1, 0.1], [0.5, 1.0]]),
                (IcClass::Diverged, vec![[0.9, 0.2], [1.0, 0.0]]),
            ],
            ellipse: Some(([0.5, 1.0], [0.25, 0.5])),
            equilibrium: Some([0.5, 1.0]),
        };
        let svg = plot.render();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<ellipse").count(), 1);
        assert!(svg.contains(r#"rx="145.00" ry="100.00""#));
        assert!(svg.contains("x2 &lt;q&gt;"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn long_curves_are_thinned() {
        let pts: Vec<[f64; 2]> = (0..10_000).map(|i| [i as f64 / 1e4, 0.5]).collect();
        let plot = PhasePlot {
            bounds: [(0.0, 1.0), (0.0, 1.0)],
            labels: ["a".into(), "b".into()],
            curves: vec![(IcClass::Timeout, pts)],
            ellipse: None,
            equilibrium: None,
        };
        let svg = plot.render();
        let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        assert!(line.matches(',').count() <= MAX_POINTS + 1);
    }
}
