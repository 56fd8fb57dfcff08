//! Minimal static SVG emission — enough to eyeball a fit, not a plotting
//! library. Deterministic output: no randomness, no timestamps.

use std::collections::HashMap;
use std::fmt::Write;

use phylocorr::data::CrossTab;
use phylocorr::tree::Tree;

/// Qualitative palette cycled across families/series.
const PALETTE: [&str; 10] = [
    "#4269d0", "#efb118", "#ff725c", "#6cc5b0", "#3ca951", "#ff8ab7", "#a463f2", "#97bbf5",
    "#9c6b4e", "#9498a0",
];

const W: f64 = 720.0;
const H: f64 = 480.0;
const MARGIN: f64 = 48.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(width: f64, height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {width} {height}\" \
         font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    )
}

/// Scatter of two numeric traits, points colored by family, with a
/// least-squares trend line per family of at least `TREND_MIN` points.
pub fn scatter(
    points: &[(f64, f64, usize)],
    families: &[String],
    xlab: &str,
    ylab: &str,
) -> String {
    const TREND_MIN: usize = 5;
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        points.iter().map(|&(x, y, _)| (x, y)).unzip();
    let range = |v: &[f64]| {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &x in v {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        if !(hi > lo) {
            (lo - 1.0, lo + 1.0)
        } else {
            let pad = 0.04 * (hi - lo);
            (lo - pad, hi + pad)
        }
    };
    let (x0, x1) = range(&xs);
    let (y0, y1) = range(&ys);
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let py = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut svg = header(W, H);
    // axes with end labels
    let _ = writeln!(
        svg,
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"#333\"/>\n\
         <line x1=\"{m}\" y1=\"{b}\" x2=\"{m}\" y2=\"{t}\" stroke=\"#333\"/>\n\
         <text x=\"{cx}\" y=\"{lbly}\" text-anchor=\"middle\">{xl}</text>\n\
         <text x=\"14\" y=\"{cy}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {cy})\">{yl}</text>\n\
         <text x=\"{m}\" y=\"{tiky}\" text-anchor=\"middle\">{x0:.2}</text>\n\
         <text x=\"{r}\" y=\"{tiky}\" text-anchor=\"middle\">{x1:.2}</text>\n\
         <text x=\"{tikx}\" y=\"{b}\" text-anchor=\"end\">{y0:.2}</text>\n\
         <text x=\"{tikx}\" y=\"{t}\" text-anchor=\"end\">{y1:.2}</text>",
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN,
        t = MARGIN,
        cx = W / 2.0,
        cy = H / 2.0,
        lbly = H - 12.0,
        tiky = H - MARGIN + 16.0,
        tikx = MARGIN - 6.0,
        xl = esc(xlab),
        yl = esc(ylab),
    );
    // per-family trend lines under the points
    let mut by_family: HashMap<usize, Vec<(f64, f64)>> = HashMap::new();
    for &(x, y, f) in points {
        by_family.entry(f).or_default().push((x, y));
    }
    let mut fams: Vec<_> = by_family.iter().collect();
    fams.sort_by_key(|(f, _)| **f);
    for (&f, pts) in fams {
        if pts.len() < TREND_MIN {
            continue;
        }
        if let Some((a, b)) = least_squares(pts) {
            let (lo, hi) = range(&pts.iter().map(|p| p.0).collect::<Vec<_>>());
            let color = PALETTE[f % PALETTE.len()];
            let _ = writeln!(
                svg,
                "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"{color}\" stroke-width=\"1.5\" opacity=\"0.7\"/>",
                px(lo), py(a + b * lo), px(hi), py(a + b * hi),
            );
        }
    }
    for &(x, y, f) in points {
        let _ = writeln!(
            svg,
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{}\" opacity=\"0.75\"/>",
            px(x),
            py(y),
            PALETTE[f % PALETTE.len()],
        );
    }
    // legend for the first few families
    for (i, name) in families.iter().take(8).enumerate() {
        let y = MARGIN + 14.0 * i as f64;
        let _ = writeln!(
            svg,
            "<circle cx=\"{x}\" cy=\"{y}\" r=\"4\" fill=\"{c}\"/>\n\
             <text x=\"{tx}\" y=\"{ty}\">{n}</text>",
            x = W - MARGIN - 110.0,
            c = PALETTE[i % PALETTE.len()],
            tx = W - MARGIN - 100.0,
            ty = y + 4.0,
            n = esc(name),
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Intercept and slope of the least-squares line, or None for a degenerate
/// x-spread.
fn least_squares(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let b = sxy / sxx;
    Some((my - b * mx, b))
}

/// Stacked-bar chart of a K×2 contingency table: one bar per ordinal level,
/// segments stacked by binary level.
pub fn stacked_bars(tab: &CrossTab) -> String {
    let k = tab.counts.len();
    let max: u64 = tab.counts.iter().map(|r| r[0] + r[1]).max().unwrap_or(1).max(1);
    let band = (W - 2.0 * MARGIN) / k as f64;
    let bar = band * 0.7;
    let scale = (H - 2.0 * MARGIN) / max as f64;
    let mut svg = header(W, H);
    let _ = writeln!(
        svg,
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"#333\"/>",
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN,
    );
    for (i, row) in tab.counts.iter().enumerate() {
        let x = MARGIN + band * (i as f64 + 0.15);
        let h0 = row[0] as f64 * scale;
        let h1 = row[1] as f64 * scale;
        let base = H - MARGIN;
        let _ = writeln!(
            svg,
            "<rect x=\"{x:.1}\" y=\"{y0:.1}\" width=\"{bar:.1}\" height=\"{h0:.1}\" fill=\"{c0}\"/>\n\
             <rect x=\"{x:.1}\" y=\"{y1:.1}\" width=\"{bar:.1}\" height=\"{h1:.1}\" fill=\"{c1}\"/>\n\
             <text x=\"{cx:.1}\" y=\"{lbl:.1}\" text-anchor=\"middle\">{name}</text>\n\
             <text x=\"{cx:.1}\" y=\"{cnt:.1}\" text-anchor=\"middle\" fill=\"#333\">{total}</text>",
            y0 = base - h0,
            y1 = base - h0 - h1,
            c0 = PALETTE[0],
            c1 = PALETTE[1],
            cx = x + bar / 2.0,
            lbl = base + 16.0,
            cnt = base - h0 - h1 - 6.0,
            name = esc(&tab.row_labels[i]),
            total = row[0] + row[1],
        );
    }
    for (j, lab) in tab.col_labels.iter().enumerate() {
        let y = MARGIN + 16.0 * j as f64;
        let _ = writeln!(
            svg,
            "<rect x=\"{x}\" y=\"{ry}\" width=\"10\" height=\"10\" fill=\"{c}\"/>\n\
             <text x=\"{tx}\" y=\"{ty}\">{l}</text>",
            x = W - MARGIN - 120.0,
            ry = y - 9.0,
            c = PALETTE[j],
            tx = W - MARGIN - 106.0,
            ty = y,
            l = esc(lab),
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Rectangular cladogram with nodes colored by a per-node value (blue → low,
/// red → high). Tip labels are drawn when they fit.
pub fn tree_annotation(tree: &Tree, value_of: &HashMap<String, f64>) -> String {
    let tips = tree.tips();
    let n = tips.len();
    let height = (14.0 * n as f64 + 2.0 * MARGIN).max(240.0);
    let depths = tree.depths();
    let max_depth = depths.iter().cloned().fold(0.0_f64, f64::max).max(1e-12);
    let label_space = if n <= 64 { 120.0 } else { 10.0 };
    let px = |d: f64| MARGIN + d / max_depth * (W - 2.0 * MARGIN - label_space);

    // tips evenly spaced in tip order; internal nodes centered on children
    let mut y = vec![0.0; tree.len()];
    for (i, &tip) in tips.iter().enumerate() {
        y[tip] = MARGIN + (height - 2.0 * MARGIN) * (i as f64 + 0.5) / n as f64;
    }
    for id in tree.postorder() {
        let children = &tree.node(id).children;
        if !children.is_empty() {
            y[id] = children.iter().map(|&c| y[c]).sum::<f64>() / children.len() as f64;
        }
    }
    let (lo, hi) = value_of.values().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
        (a.min(v), b.max(v))
    });
    let color = |v: f64| -> String {
        let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
        let r = (64.0 + 191.0 * t) as u8;
        let b = (255.0 - 191.0 * t) as u8;
        format!("#{r:02x}40{b:02x}")
    };

    let mut svg = header(W, height);
    for id in tree.preorder() {
        let node = tree.node(id);
        if !node.children.is_empty() {
            let (ylo, yhi) = node
                .children
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &c| (a.min(y[c]), b.max(y[c])));
            let _ = writeln!(
                svg,
                "<line x1=\"{x:.1}\" y1=\"{ylo:.1}\" x2=\"{x:.1}\" y2=\"{yhi:.1}\" stroke=\"#777\"/>",
                x = px(depths[id]),
            );
            for &c in &node.children {
                let _ = writeln!(
                    svg,
                    "<line x1=\"{x0:.1}\" y1=\"{yc:.1}\" x2=\"{x1:.1}\" y2=\"{yc:.1}\" stroke=\"#777\"/>",
                    x0 = px(depths[id]),
                    x1 = px(depths[c]),
                    yc = y[c],
                );
            }
        }
        let name = match &node.label {
            Some(l) => l.clone(),
            None => format!("n{id}"),
        };
        if let Some(&v) = value_of.get(&name) {
            let _ = writeln!(
                svg,
                "<circle cx=\"{cx:.1}\" cy=\"{cy:.1}\" r=\"3.5\" fill=\"{c}\"><title>{t}: {v:.3}</title></circle>",
                cx = px(depths[id]),
                cy = y[id],
                c = color(v),
                t = esc(&name),
            );
        }
        if node.children.is_empty() && n <= 64 {
            let _ = writeln!(
                svg,
                "<text x=\"{tx:.1}\" y=\"{ty:.1}\">{l}</text>",
                tx = px(depths[id]) + 8.0,
                ty = y[id] + 4.0,
                l = esc(&name),
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scatter_is_well_formed_and_draws_every_point() {
        let pts = vec![(0.0, 1.0, 0), (1.0, 2.0, 0), (2.0, 1.5, 1)];
        let svg = scatter(&pts, &["f1".into(), "f2".into()], "x", "y");
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<circle").count(), 3 + 2, "points + legend");
        assert!(svg.contains(">x</text>") && svg.contains(">y</text>"));
    }

    #[test]
    fn trend_lines_appear_only_for_large_families() {
        let small: Vec<(f64, f64, usize)> =
            (0..4).map(|i| (i as f64, i as f64, 0)).collect();
        let svg = scatter(&small, &["f1".into()], "x", "y");
        let axis_lines = 2;
        assert_eq!(svg.matches("<line").count(), axis_lines);
        let big: Vec<(f64, f64, usize)> =
            (0..6).map(|i| (i as f64, 2.0 * i as f64, 0)).collect();
        let svg = scatter(&big, &["f1".into()], "x", "y");
        assert_eq!(svg.matches("<line").count(), axis_lines + 1);
    }

    #[test]
    fn stacked_bars_have_one_pair_of_rects_per_level() {
        let tab = CrossTab {
            row_labels: vec!["low".into(), "high".into()],
            col_labels: ["no".into(), "yes".into()],
            counts: vec![[3, 1], [0, 5]],
        };
        let svg = stacked_bars(&tab);
        // 2 levels × 2 segments + 2 legend swatches
        assert_eq!(svg.matches("<rect").count(), 1 + 4 + 2, "background + bars + legend");
        assert!(svg.contains(">low</text>"));
    }

    #[test]
    fn tree_svg_scales_with_tip_count_and_labels_small_trees() {
        let tree = phylocorr::tree::newick::parse("((A:1,B:1):1,C:2);").unwrap().tree;
        let vals: HashMap<String, f64> = [("A", 0.1), ("B", 0.5), ("C", 0.9)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let svg = tree_annotation(&tree, &vals);
        assert_eq!(svg.matches("<circle").count(), 3, "one dot per valued node");
        assert!(svg.contains(">A</text>"), "small trees get tip labels");
    }
}
