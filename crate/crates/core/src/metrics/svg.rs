use std::fmt::Write;

/// Fixed histogram binning: `count` equal bins over `[lo, hi)`; values
/// outside are clamped into the edge bins.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bins {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Bins {
    pub fn index(&self, x: f64) -> usize {
        let t = ((x - self.lo) / (self.hi - self.lo) * self.count as f64).floor();
        (t.max(0.0) as usize).min(self.count - 1)
    }
}

const W: f64 = 480.0;
const H: f64 = 300.0;
const PAD: f64 = 40.0;
const COLORS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Overlaid normalized histograms, one outline per named series.
pub fn histogram_svg(title: &str, series: &[(String, Vec<f64>)], bins: Bins) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\">");
    let _ = writeln!(out, "<!-- histogram bins: lo={} hi={} count={} -->", bins.lo, bins.hi, bins.count);
    let _ = writeln!(out, "<text x=\"{PAD}\" y=\"20\" font-size=\"14\">{}</text>", escape(title));
    let counts: Vec<Vec<f64>> = series
        .iter()
        .map(|(_, v)| {
            let mut c = vec![0.0; bins.count];
            for x in v.iter().filter(|x| x.is_finite()) {
                c[bins.index(*x)] += 1.0;
            }
            let n = v.len().max(1) as f64;
            c.iter().map(|x| x / n).collect()
        })
        .collect();
    let top = counts.iter().flatten().fold(0.0f64, |m, x| m.max(*x)).max(1e-12);
    let bw = (W - 2.0 * PAD) / bins.count as f64;
    for (k, c) in counts.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        for (i, f) in c.iter().enumerate() {
            let h = f / top * (H - 2.0 * PAD);
            let _ = writeln!(
                out,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{color}\" fill-opacity=\"0.35\" stroke=\"{color}\"/>",
                PAD + i as f64 * bw,
                H - PAD - h,
                bw,
                h
            );
        }
        let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" fill=\"{color}\">{}</text>", W - PAD - 90.0, PAD + 14.0 * k as f64, escape(&series[k].0));
    }
    let _ = writeln!(out, "<line x1=\"{PAD}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>", H - PAD, W - PAD);
    let _ = writeln!(out, "<text x=\"{PAD}\" y=\"{}\" font-size=\"10\">{}</text>", H - PAD + 14.0, bins.lo);
    let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" font-size=\"10\">{}</text>", W - PAD - 20.0, H - PAD + 14.0, bins.hi);
    out.push_str("</svg>\n");
    out
}

/// Polylines of `(x, y)` series on shared axes.
pub fn series_svg(title: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let pts = series.iter().flat_map(|s| s.1.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in pts {
        x0 = x0.min(p.0);
        x1 = x1.max(p.0);
        y0 = y0.min(p.1);
        y1 = y1.max(p.1);
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    if !(y1 > y0) {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut out = String::new();
    let _ = writeln!(out, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\">");
    let _ = writeln!(out, "<!-- x range [{x0}, {x1}], y range [{y0}, {y1}] -->");
    let _ = writeln!(out, "<text x=\"{PAD}\" y=\"20\" font-size=\"14\">{}</text>", escape(title));
    for (k, (name, s)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = s.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
        let _ = writeln!(out, "<polyline fill=\"none\" stroke=\"{color}\" points=\"{}\"/>", path.join(" "));
        let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" fill=\"{color}\">{}</text>", W - PAD - 90.0, PAD + 14.0 * k as f64, escape(name));
    }
    let _ = writeln!(out, "<line x1=\"{PAD}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>", H - PAD, W - PAD);
    let _ = writeln!(out, "<text x=\"{PAD}\" y=\"{}\" font-size=\"10\">{y0:.3}</text>", H - PAD + 14.0);
    let _ = writeln!(out, "<text x=\"5\" y=\"{PAD}\" font-size=\"10\">{y1:.3}</text>");
    out.push_str("</svg>\n");
    out
}
