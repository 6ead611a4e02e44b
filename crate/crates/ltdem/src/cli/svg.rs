//! Minimal self-contained SVG line plot for rate-versus-distance sweeps:
//! linear distance axis, log rate axis, one curve per lambda source.

use crate::channel::SweepPoint;

const WIDTH: f64 = 680.0;
const HEIGHT: f64 = 460.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 25.0;
const MARGIN_B: f64 = 50.0;

struct LogAxis {
    min_exp: i32,
    max_exp: i32,
}

impl LogAxis {
    fn from_rates(points: &[SweepPoint]) -> Self {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in points {
            for r in [p.report.analytical.skr, p.report.sdp.skr] {
                if r > 0.0 {
                    lo = lo.min(r);
                    hi = hi.max(r);
                }
            }
        }
        if !lo.is_finite() {
            return LogAxis { min_exp: -12, max_exp: 0 };
        }
        LogAxis {
            min_exp: lo.log10().floor() as i32,
            max_exp: hi.log10().ceil() as i32,
        }
    }

    fn y(&self, rate: f64) -> Option<f64> {
        if rate <= 0.0 {
            return None;
        }
        let span = (self.max_exp - self.min_exp).max(1) as f64;
        let frac = (rate.log10() - self.min_exp as f64) / span;
        Some(HEIGHT - MARGIN_B - frac * (HEIGHT - MARGIN_T - MARGIN_B))
    }
}

fn x_of(l: f64, l_min: f64, l_max: f64) -> f64 {
    let span = (l_max - l_min).max(1e-12);
    MARGIN_L + (l - l_min) / span * (WIDTH - MARGIN_L - MARGIN_R)
}

/// Polyline segments of one curve, broken where the rate hits zero.
fn segments(
    points: &[SweepPoint],
    axis: &LogAxis,
    l_min: f64,
    l_max: f64,
    pick: impl Fn(&SweepPoint) -> f64,
) -> Vec<String> {
    let mut segs = Vec::new();
    let mut current: Vec<String> = Vec::new();
    for p in points {
        match axis.y(pick(p)) {
            Some(y) => current.push(format!("{:.2},{:.2}", x_of(p.l_km, l_min, l_max), y)),
            None => {
                if current.len() > 1 {
                    segs.push(current.join(" "));
                }
                current.clear();
            }
        }
    }
    if current.len() > 1 {
        segs.push(current.join(" "));
    }
    segs
}

/// Renders the sweep as a complete SVG document.
pub fn render_rate_plot(points: &[SweepPoint]) -> String {
    let l_min = points.first().map_or(0.0, |p| p.l_km);
    let l_max = points.last().map_or(1.0, |p| p.l_km).max(l_min + 1e-9);
    let axis = LogAxis::from_rates(points);
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    ));
    // Frame.
    s.push_str(&format!(
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{:.2}\" height=\"{:.2}\" \
         fill=\"none\" stroke=\"black\"/>\n",
        WIDTH - MARGIN_L - MARGIN_R,
        HEIGHT - MARGIN_T - MARGIN_B
    ));
    // Y decade ticks and grid.
    for e in axis.min_exp..=axis.max_exp {
        if let Some(y) = axis.y(10f64.powi(e)) {
            s.push_str(&format!(
                "<line x1=\"{MARGIN_L}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" \
                 stroke=\"#dddddd\"/>\n",
                WIDTH - MARGIN_R
            ));
            s.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\" \
                 font-family=\"sans-serif\">1e{e}</text>\n",
                MARGIN_L - 6.0,
                y + 4.0
            ));
        }
    }
    // X ticks: six evenly spaced.
    for k in 0..=5 {
        let l = l_min + (l_max - l_min) * k as f64 / 5.0;
        let x = x_of(l, l_min, l_max);
        s.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
            HEIGHT - MARGIN_B,
            HEIGHT - MARGIN_B + 5.0
        ));
        s.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\" \
             font-family=\"sans-serif\">{l:.0}</text>\n",
            HEIGHT - MARGIN_B + 18.0
        ));
    }
    // Axis labels.
    s.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\" \
         font-family=\"sans-serif\">channel length (km)</text>\n",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 12.0
    ));
    s.push_str(&format!(
        "<text x=\"16\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\" \
         font-family=\"sans-serif\" transform=\"rotate(-90 16 {:.2})\">secret key rate per pulse</text>\n",
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0
    ));
    // Curves.
    type RatePick = Box<dyn Fn(&SweepPoint) -> f64>;
    let series: [(&str, &str, &str, RatePick); 2] = [
        ("analytical", "#1f77b4", "", Box::new(|p: &SweepPoint| p.report.analytical.skr)),
        ("sdp", "#d62728", "6,4", Box::new(|p: &SweepPoint| p.report.sdp.skr)),
    ];
    for (_, color, dash, pick) in &series {
        for seg in segments(points, &axis, l_min, l_max, pick) {
            let dash_attr = if dash.is_empty() {
                String::new()
            } else {
                format!(" stroke-dasharray=\"{dash}\"")
            };
            s.push_str(&format!(
                "<polyline points=\"{seg}\" fill=\"none\" stroke=\"{color}\" \
                 stroke-width=\"1.5\"{dash_attr}/>\n"
            ));
        }
    }
    // Legend.
    let lx = WIDTH - MARGIN_R - 150.0;
    let ly = MARGIN_T + 14.0;
    for (k, (name, color, dash, _)) in series.iter().enumerate() {
        let y = ly + 16.0 * k as f64;
        let dash_attr = if dash.is_empty() {
            String::new()
        } else {
            format!(" stroke-dasharray=\"{dash}\"")
        };
        s.push_str(&format!(
            "<line x1=\"{lx:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"{color}\" \
             stroke-width=\"1.5\"{dash_attr}/>\n",
            lx + 28.0
        ));
        s.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" font-family=\"sans-serif\">{name}</text>\n",
            lx + 34.0,
            y + 4.0
        ));
    }
    s.push_str("</svg>\n");
    s
}
