//! Human-readable renderings of analysis results: CSV, markdown and SVG.
//!
//! Every artifact carries the configuration hash, the root seed and the
//! SHA-256 of each input file. Nothing time-dependent is written, so equal
//! inputs give byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::stats::{AnovaResult, BoxSummary, ChiSqResult, TukeyResult};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
    pub inputs: Vec<InputDigest>,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Provenance {
    fn lines(&self) -> Vec<String> {
        let mut out = vec![
            format!("config_sha256: {}", self.config_sha256),
            format!("seed: {}", self.seed),
        ];
        for i in &self.inputs {
            out.push(format!("input {}: sha256 {}", i.path, i.sha256));
        }
        out
    }

    pub fn csv_header(&self) -> String {
        self.lines().iter().map(|l| format!("# {l}\n")).collect()
    }

    pub fn markdown_footer(&self) -> String {
        let mut s = String::from("\n## Provenance\n\n");
        for l in self.lines() {
            let _ = writeln!(s, "- `{l}`");
        }
        s
    }

    fn svg_desc(&self) -> String {
        xml_escape(&self.lines().join("; "))
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn md_escape(s: &str) -> String {
    s.replace('|', "\\|")
}

/// `< .001` below the reporting floor, three decimals otherwise.
pub fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        "< .001".into()
    } else {
        format!("{p:.3}")
    }
}

fn fmt_f(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.2}")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Per-cell means, as CSV and as a markdown grid (antecedent rows, coreferent columns).
pub fn cell_means_tables(anova: &AnovaResult, prov: &Provenance) -> (String, String) {
    let mut csv = prov.csv_header();
    let _ = writeln!(csv, "{},{},n,mean_logprob,mean_probability", anova.factor_a, anova.factor_b);
    for c in &anova.cell_means {
        let _ = writeln!(
            csv,
            "{},{},{},{:.6},{:.6}",
            csv_field(&c.a),
            csv_field(&c.b),
            c.n,
            c.mean,
            c.mean.exp()
        );
    }
    let mut md = format!(
        "# Cell means of log(p)\n\n{} cells ({} x {}), n = {} per cell.\n\n",
        anova.cell_means.len(),
        anova.levels_a.len(),
        anova.levels_b.len(),
        anova.n_per_cell
    );
    let _ = write!(md, "| {} \\ {} |", anova.factor_a, anova.factor_b);
    for b in &anova.levels_b {
        let _ = write!(md, " {} |", md_escape(b));
    }
    md.push_str("\n|---|");
    md.push_str(&"---:|".repeat(anova.levels_b.len()));
    md.push('\n');
    for a in &anova.levels_a {
        let _ = write!(md, "| {} |", md_escape(a));
        for b in &anova.levels_b {
            let m = anova.cell_means.iter().find(|c| &c.a == a && &c.b == b).map(|c| c.mean);
            match m {
                Some(v) => {
                    let _ = write!(md, " {v:.3} |");
                }
                None => md.push_str(" - |"),
            }
        }
        md.push('\n');
    }
    md.push_str(&prov.markdown_footer());
    (csv, md)
}

pub fn anova_markdown(anova: &AnovaResult, prov: &Provenance) -> String {
    let mut md = String::from("# Two-way ANOVA on log(p)\n\n");
    let _ = writeln!(
        md,
        "N = {}, {} x {} balanced design, n = {} per cell.\n",
        anova.n_total,
        anova.levels_a.len(),
        anova.levels_b.len(),
        anova.n_per_cell
    );
    md.push_str("| Effect | df | SS | MS | F | p | eta2 | 95% CI | Label |\n");
    md.push_str("|---|---|---:|---:|---:|---|---:|---|---|\n");
    for e in &anova.effects {
        let _ = writeln!(
            md,
            "| {} | ({}, {}) | {:.3} | {:.3} | {} | {} | {:.2} | [{:.2}, {:.2}] | {} |",
            md_escape(&e.effect),
            e.df1,
            e.df2,
            e.sum_of_squares,
            e.mean_square,
            fmt_f(e.f),
            fmt_p(e.p),
            e.eta2,
            e.eta2_ci_lower,
            e.eta2_ci_upper,
            e.label
        );
    }
    let _ = writeln!(
        md,
        "| Residual | {} | {:.3} | {:.3} | | | | | |",
        anova.error_df, anova.error_sum_of_squares, anova.error_mean_square
    );
    let _ = writeln!(md, "\n- {}", anova.eta2_definition);
    let _ = writeln!(md, "- CI: {}", anova.eta2_ci_method);
    md.push_str("- Fixed-effects model; templates are not modelled as a random factor.\n");
    md.push_str("- Effect-size labels: Field (2012) bands for eta2.\n");
    if anova.degenerate {
        md.push_str("- All responses are identical; F is undefined and reported as 0 with p = 1.\n");
    }
    md.push_str(&prov.markdown_footer());
    md
}

pub fn tukey_csv(tukey: &TukeyResult, prov: &Provenance) -> String {
    let mut csv = prov.csv_header();
    let _ = writeln!(
        csv,
        "# k={} df_error={} mse={:.6} q_crit={:.6} alpha={}",
        tukey.k, tukey.df_error, tukey.mse, tukey.q_crit, tukey.alpha
    );
    csv.push_str("cell_i,cell_j,mean_diff,ratio,standard_error,q,p_adj,ci_low,ci_high\n");
    for c in &tukey.contrasts {
        let _ = writeln!(
            csv,
            "{},{},{:.6},{:.6},{:.6},{:.4},{:.6},{:.6},{:.6}",
            csv_field(&c.cell_i),
            csv_field(&c.cell_j),
            c.mean_diff,
            c.ratio,
            c.standard_error,
            c.q,
            c.p_adj,
            c.ci_low,
            c.ci_high
        );
    }
    csv
}

/// Markdown for one or more named chi-square results.
pub fn chisq_markdown(results: &[(String, ChiSqResult)], prov: &Provenance) -> String {
    let mut md = String::from("# Chi-square tests of independence\n\n");
    for (group, r) in results {
        let _ = writeln!(md, "## {group}\n");
        let _ = writeln!(
            md,
            "chi2({}, N = {}) = {:.2}, p {}; adjusted Cramer's V = {:.2}, 95% CI [{:.2}, {:.2}] ({})\n",
            r.df,
            r.n,
            r.chi2,
            if r.p < 0.001 { "< .001".to_string() } else { format!("= {:.3}", r.p) },
            r.cramers_v_adjusted,
            r.v_ci_lower,
            r.v_ci_upper,
            r.label
        );
        let _ = write!(md, "| antecedent \\ mentioned |");
        for c in &r.col_labels {
            let _ = write!(md, " {} |", md_escape(c));
        }
        md.push_str("\n|---|");
        md.push_str(&"---:|".repeat(r.col_labels.len()));
        md.push('\n');
        for (row, counts) in r.row_labels.iter().zip(&r.observed) {
            let _ = write!(md, "| {} |", md_escape(row));
            for c in counts {
                let _ = write!(md, " {c} |");
            }
            md.push('\n');
        }
        let _ = writeln!(md, "\n- unadjusted V = {:.3}; CI: {}", r.cramers_v, r.ci_method);
        for w in &r.warnings {
            let _ = writeln!(md, "- warning: {w}");
        }
        md.push('\n');
    }
    md.push_str("Effect-size labels: Funder & Ozer (2019) bands applied to adjusted V.\n");
    md.push_str(&prov.markdown_footer());
    md
}

pub fn contingency_csv(results: &[(String, ChiSqResult)], prov: &Provenance) -> String {
    let mut csv = prov.csv_header();
    csv.push_str("group,antecedent,mentioned_gender,count\n");
    for (group, r) in results {
        for (row, counts) in r.row_labels.iter().zip(&r.observed) {
            for (col, n) in r.col_labels.iter().zip(counts) {
                let _ = writeln!(csv, "{},{},{},{n}", csv_field(group), csv_field(row), csv_field(col));
            }
        }
    }
    csv
}

fn series_color(name: &str, i: usize) -> &'static str {
    match name {
        "masc" => "#4477aa",
        "fem" => "#ee6677",
        "neut" => "#228833",
        _ => ["#ccbb44", "#66ccee", "#aa3377", "#bbbbbb"][i % 4],
    }
}

fn nice_step(range: f64) -> f64 {
    let raw = (range / 6.0).max(1e-12);
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    let m = if r <= 1.0 {
        1.0
    } else if r <= 2.0 {
        2.0
    } else if r <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

/// Box plots of per-cell distributions: one group per antecedent level, one
/// box per coreferent level. `cells[g][s]` is `None` for an empty cell, which
/// is drawn as a gap with a footnote.
pub fn render_distribution_svg(
    title: &str,
    groups: &[String],
    series: &[String],
    cells: &[Vec<Option<BoxSummary>>],
    prov: &Provenance,
) -> String {
    const BOX_W: f64 = 18.0;
    const SLOT: f64 = 26.0;
    const GROUP_GAP: f64 = 22.0;
    const LEFT: f64 = 64.0;
    const TOP: f64 = 48.0;
    const PLOT_H: f64 = 300.0;

    let group_w = SLOT * series.len() as f64 + GROUP_GAP;
    let width = LEFT + group_w * groups.len() as f64 + 20.0;
    let mut gaps = Vec::new();

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for b in cells.iter().flatten().flatten() {
        lo = lo.min(b.whisker_low).min(b.outliers.iter().copied().fold(f64::INFINITY, f64::min));
        hi = hi.max(b.whisker_high).max(b.outliers.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = -1.0;
        hi = 0.0;
    }
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let step = nice_step(hi - lo);
    let y_min = (lo / step).floor() * step;
    let y_max = (hi / step).ceil() * step;
    let y = |v: f64| TOP + PLOT_H * (y_max - v) / (y_max - y_min);

    let footnote_rows = cells.iter().flatten().filter(|c| c.is_none()).count();
    let height = TOP + PLOT_H + 64.0 + 14.0 * footnote_rows as f64;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\" font-size=\"11\">"
    );
    let _ = writeln!(s, "<title>{}</title>", xml_escape(title));
    let _ = writeln!(s, "<desc>{}</desc>", prov.svg_desc());
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"{LEFT}\" y=\"20\" font-size=\"13\">{}</text>", xml_escape(title));

    // axis and grid
    let mut t = y_min;
    while t <= y_max + step * 1e-6 {
        let yy = y(t);
        let _ = writeln!(
            s,
            "<line x1=\"{LEFT}\" y1=\"{yy:.2}\" x2=\"{:.2}\" y2=\"{yy:.2}\" stroke=\"#e5e5e5\"/>",
            width - 20.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
            LEFT - 6.0,
            yy + 4.0,
            fmt_tick(t, step)
        );
        t += step;
    }
    let _ = writeln!(
        s,
        "<text transform=\"translate(16 {:.2}) rotate(-90)\" text-anchor=\"middle\">log(p)</text>",
        TOP + PLOT_H / 2.0
    );

    for (gi, g) in groups.iter().enumerate() {
        let gx = LEFT + gi as f64 * group_w + GROUP_GAP / 2.0;
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            gx + SLOT * series.len() as f64 / 2.0,
            TOP + PLOT_H + 18.0,
            xml_escape(g)
        );
        for (si, name) in series.iter().enumerate() {
            let cx = gx + SLOT * si as f64 + SLOT / 2.0;
            let color = series_color(name, si);
            let Some(b) = cells.get(gi).and_then(|r| r.get(si)).and_then(|c| c.as_ref()) else {
                gaps.push(format!("{g}:{name}"));
                continue;
            };
            let (x0, x1) = (cx - BOX_W / 2.0, cx + BOX_W / 2.0);
            let _ = writeln!(
                s,
                "<g data-cell=\"{}:{}\">",
                xml_escape(g),
                xml_escape(name)
            );
            let _ = writeln!(
                s,
                "<line x1=\"{cx:.2}\" y1=\"{:.2}\" x2=\"{cx:.2}\" y2=\"{:.2}\" stroke=\"#333\"/>",
                y(b.whisker_high),
                y(b.whisker_low)
            );
            for w in [b.whisker_low, b.whisker_high] {
                let _ = writeln!(
                    s,
                    "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#333\"/>",
                    cx - BOX_W / 4.0,
                    y(w),
                    cx + BOX_W / 4.0,
                    y(w)
                );
            }
            let _ = writeln!(
                s,
                "<rect x=\"{x0:.2}\" y=\"{:.2}\" width=\"{BOX_W:.2}\" height=\"{:.2}\" fill=\"{color}\" fill-opacity=\"0.7\" stroke=\"#333\"/>",
                y(b.q3),
                (y(b.q1) - y(b.q3)).max(0.0)
            );
            let _ = writeln!(
                s,
                "<line x1=\"{x0:.2}\" y1=\"{:.2}\" x2=\"{x1:.2}\" y2=\"{:.2}\" stroke=\"#000\" stroke-width=\"2\"/>",
                y(b.median),
                y(b.median)
            );
            for o in &b.outliers {
                let _ = writeln!(
                    s,
                    "<circle cx=\"{cx:.2}\" cy=\"{:.2}\" r=\"1.5\" fill=\"{color}\"/>",
                    y(*o)
                );
            }
            s.push_str("</g>\n");
        }
    }

    // legend
    let mut lx = LEFT;
    let ly = TOP - 16.0;
    for (si, name) in series.iter().enumerate() {
        let _ = writeln!(
            s,
            "<rect x=\"{lx:.2}\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{:.2}\" y=\"{ly:.2}\">{}</text>",
            ly - 9.0,
            series_color(name, si),
            lx + 14.0,
            xml_escape(name)
        );
        lx += 24.0 + 7.0 * name.chars().count() as f64;
    }

    let mut fy = TOP + PLOT_H + 40.0;
    for g in &gaps {
        let _ = writeln!(
            s,
            "<text x=\"{LEFT}\" y=\"{fy:.2}\" font-size=\"10\">gap: no observations for {}</text>",
            xml_escape(g)
        );
        fy += 14.0;
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 { 0 } else { (-step.log10().floor()) as usize };
    let v = if v.abs() < step * 1e-9 { 0.0 } else { v };
    format!("{v:.decimals$}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov() -> Provenance {
        Provenance {
            config_sha256: "abc".into(),
            seed: 7,
            inputs: vec![InputDigest { path: "scores/en_pl.jsonl".into(), sha256: "def".into() }],
        }
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn svg_layout_counts_boxes() {
        let b = BoxSummary::from_values(&[-3.0, -2.5, -2.0, -1.0, -9.0]).unwrap();
        let cells = vec![vec![Some(b.clone()); 3]; 3];
        let svg = render_distribution_svg("EN", &names(&["masc", "fem", "neut"]), &names(&["masc", "fem", "neut"]), &cells, &prov());
        assert_eq!(svg.matches("<g data-cell=").count(), 9);
        assert!(svg.contains("config_sha256: abc"));
        let again = render_distribution_svg("EN", &names(&["masc", "fem", "neut"]), &names(&["masc", "fem", "neut"]), &cells, &prov());
        assert_eq!(svg, again);
    }

    #[test]
    fn svg_renders_gaps_and_flat_boxes() {
        let flat = BoxSummary::from_values(&[-2.0; 4]).unwrap();
        let cells = vec![vec![Some(flat), None]];
        let svg = render_distribution_svg("x", &names(&["a"]), &names(&["masc", "fem"]), &cells, &prov());
        assert_eq!(svg.matches("<g data-cell=").count(), 1);
        assert!(svg.contains("gap: no observations for a:fem"));
        assert!(svg.contains("height=\"0.00\""));
    }

    #[test]
    fn p_formatting() {
        assert_eq!(fmt_p(0.0001), "< .001");
        assert_eq!(fmt_p(0.0098), "0.010");
        assert_eq!(fmt_tick(-2.5, 0.5), "-2.5");
        assert_eq!(fmt_tick(-4.0, 2.0), "-4");
    }

    #[test]
    fn csv_quotes_when_needed() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("plain"), "plain");
    }
}
