//! Static SVG renderings of a trace: a per-task-type color-coded Gantt
//! chart with a parallelism subplot, and a standalone utilization chart.

use std::collections::HashMap;
use std::fmt::Write;
use std::sync::Arc;

use super::{running_series, TraceEvent, TraceKind};

const PALETTE: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1", "#ff9da7",
    "#9c755f", "#bab0ac",
];

const WIDTH: f64 = 1200.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 34.0;

struct TaskBar {
    start_ms: u64,
    end_ms: u64,
    type_idx: usize,
}

fn collect_bars(trace: &[TraceEvent]) -> (Vec<TaskBar>, Vec<Arc<str>>) {
    let mut types: Vec<Arc<str>> = Vec::new();
    let mut type_index: HashMap<Arc<str>, usize> = HashMap::new();
    let mut open: HashMap<Arc<str>, (u64, usize)> = HashMap::new();
    let mut bars = Vec::new();
    for e in trace {
        let (Some(task), Some(ty)) = (&e.task_id, &e.pool) else { continue };
        match e.kind {
            TraceKind::TaskStarted => {
                let idx = *type_index.entry(ty.clone()).or_insert_with(|| {
                    types.push(ty.clone());
                    types.len() - 1
                });
                open.insert(task.clone(), (e.time_ms, idx));
            }
            TraceKind::TaskCompleted => {
                if let Some((start, idx)) = open.remove(task) {
                    bars.push(TaskBar { start_ms: start, end_ms: e.time_ms, type_idx: idx });
                }
            }
            _ => {}
        }
    }
    bars.sort_by_key(|b| (b.start_ms, b.end_ms, b.type_idx));
    (bars, types)
}

fn time_span(trace: &[TraceEvent]) -> (u64, u64) {
    let first = trace.first().map(|e| e.time_ms).unwrap_or(0);
    let last = trace.last().map(|e| e.time_ms).unwrap_or(0).max(first + 1);
    (first, last)
}

fn axis_ticks(span_ms: u64) -> Vec<u64> {
    let raw = span_ms / 6;
    let steps = [
        1000, 2000, 5000, 10_000, 30_000, 60_000, 120_000, 300_000, 600_000, 1_800_000, 3_600_000,
    ];
    let step = steps.iter().copied().find(|&s| s >= raw.max(1)).unwrap_or(3_600_000);
    (0..=span_ms / step).map(|k| k * step).collect()
}

fn legend(svg: &mut String, types: &[Arc<str>], y: f64) {
    let mut x = MARGIN_LEFT;
    for (i, ty) in types.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = write!(
            svg,
            "<rect x='{x:.1}' y='{:.1}' width='10' height='10' fill='{color}'/>\
             <text x='{:.1}' y='{:.1}' font-size='11' fill='#333'>{ty}</text>",
            y - 9.0,
            x + 14.0,
            y
        );
        x += 14.0 + 7.0 * ty.len() as f64 + 18.0;
    }
}

fn utilization_plot(
    svg: &mut String,
    trace: &[TraceEvent],
    capacity: u32,
    top: f64,
    height: f64,
    t0: u64,
    span: u64,
) {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let x_of = |t: u64| MARGIN_LEFT + (t - t0) as f64 / span as f64 * plot_w;
    let max_y = capacity.max(1) as f64;
    let y_of = |r: u32| top + height - (r as f64 / max_y).min(1.0) * height;

    let _ = write!(
        svg,
        "<rect x='{MARGIN_LEFT}' y='{top:.1}' width='{plot_w:.1}' height='{height:.1}' \
         fill='none' stroke='#999' stroke-width='0.5'/>"
    );
    // Capacity line.
    let _ = write!(
        svg,
        "<line x1='{MARGIN_LEFT}' y1='{0:.1}' x2='{1:.1}' y2='{0:.1}' stroke='#c00' \
         stroke-width='0.7' stroke-dasharray='4,3'/>\
         <text x='{2:.1}' y='{3:.1}' font-size='10' fill='#c00'>capacity {capacity}</text>",
        y_of(capacity),
        MARGIN_LEFT + plot_w,
        MARGIN_LEFT + 4.0,
        y_of(capacity) - 3.0
    );

    let series = running_series(trace);
    let mut d = String::new();
    let mut level = 0u32;
    let _ = write!(d, "M{:.2} {:.2}", x_of(t0), y_of(0));
    for &(t, r) in &series {
        let x = x_of(t.clamp(t0, t0 + span));
        let _ = write!(d, " L{x:.2} {:.2} L{x:.2} {:.2}", y_of(level), y_of(r));
        level = r;
    }
    let _ = write!(d, " L{:.2} {:.2}", x_of(t0 + span), y_of(level));
    let _ = write!(svg, "<path d='{d}' fill='none' stroke='#1f3b70' stroke-width='1'/>");
    let _ = write!(
        svg,
        "<text x='{:.1}' y='{:.1}' font-size='10' fill='#333' transform='rotate(-90 {0:.1} {1:.1})'>running tasks</text>",
        MARGIN_LEFT - 38.0,
        top + height / 2.0
    );
}

fn x_axis(svg: &mut String, y: f64, t0: u64, span: u64) {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    for tick in axis_ticks(span) {
        let x = MARGIN_LEFT + tick as f64 / span as f64 * plot_w;
        let _ = write!(
            svg,
            "<line x1='{x:.1}' y1='{y:.1}' x2='{x:.1}' y2='{:.1}' stroke='#999' stroke-width='0.5'/>\
             <text x='{x:.1}' y='{:.1}' font-size='10' fill='#333' text-anchor='middle'>{}</text>",
            y + 4.0,
            y + 15.0,
            (t0 + tick) / 1000
        );
    }
    let _ = write!(
        svg,
        "<text x='{:.1}' y='{:.1}' font-size='10' fill='#333' text-anchor='middle'>time [s]</text>",
        MARGIN_LEFT + plot_w / 2.0,
        y + 28.0
    );
}

/// Gantt chart: one row per task, color-coded by task type, with the
/// parallelism subplot underneath.
pub fn gantt_svg(trace: &[TraceEvent], title: &str, capacity: u32) -> String {
    let (bars, types) = collect_bars(trace);
    let (t0, t1) = time_span(trace);
    let span = (t1 - t0).max(1);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;

    let row_h = (700.0 / bars.len().max(1) as f64).clamp(0.8, 12.0);
    let gantt_h = row_h * bars.len() as f64;
    let util_top = MARGIN_TOP + gantt_h + 24.0;
    let util_h = 140.0;
    let total_h = util_top + util_h + 40.0;

    let mut svg = String::with_capacity(bars.len() * 64 + 4096);
    let _ = write!(
        svg,
        "<svg xmlns='http://www.w3.org/2000/svg' width='{WIDTH}' height='{total_h:.0}' \
         viewBox='0 0 {WIDTH} {total_h:.0}' font-family='sans-serif'>\
         <rect width='100%' height='100%' fill='white'/>\
         <text x='{MARGIN_LEFT}' y='16' font-size='13' fill='#111'>{title}</text>"
    );
    legend(&mut svg, &types, 28.0);

    let x_of = |t: u64| MARGIN_LEFT + (t - t0) as f64 / span as f64 * plot_w;
    for (row, bar) in bars.iter().enumerate() {
        let x = x_of(bar.start_ms);
        let w = (x_of(bar.end_ms) - x).max(0.3);
        let y = MARGIN_TOP + row as f64 * row_h;
        let color = PALETTE[bar.type_idx % PALETTE.len()];
        let _ = write!(
            svg,
            "<rect x='{x:.2}' y='{y:.2}' width='{w:.2}' height='{:.2}' fill='{color}'/>",
            (row_h - 0.2).max(0.6)
        );
    }

    utilization_plot(&mut svg, trace, capacity, util_top, util_h, t0, span);
    x_axis(&mut svg, util_top + util_h, t0, span);
    svg.push_str("</svg>");
    svg
}

/// Standalone utilization chart: running tasks over time against capacity.
pub fn utilization_svg(trace: &[TraceEvent], title: &str, capacity: u32) -> String {
    let (t0, t1) = time_span(trace);
    let span = (t1 - t0).max(1);
    let top = MARGIN_TOP + 10.0;
    let height = 260.0;
    let total_h = top + height + 40.0;

    let mut svg = String::with_capacity(8192);
    let _ = write!(
        svg,
        "<svg xmlns='http://www.w3.org/2000/svg' width='{WIDTH}' height='{total_h:.0}' \
         viewBox='0 0 {WIDTH} {total_h:.0}' font-family='sans-serif'>\
         <rect width='100%' height='100%' fill='white'/>\
         <text x='{MARGIN_LEFT}' y='16' font-size='13' fill='#111'>{title}</text>"
    );
    utilization_plot(&mut svg, trace, capacity, top, height, t0, span);
    x_axis(&mut svg, top + height, t0, span);
    svg.push_str("</svg>");
    svg
}

/// Stacked utilization panels, one per model, sharing the page. Used by
/// model comparisons.
pub fn comparison_svg(entries: &[(&str, &[TraceEvent], u32)]) -> String {
    let panel_h = 330.0;
    let total_h = panel_h * entries.len() as f64;
    let mut svg = String::with_capacity(16_384);
    let _ = write!(
        svg,
        "<svg xmlns='http://www.w3.org/2000/svg' width='{WIDTH}' height='{total_h:.0}' \
         viewBox='0 0 {WIDTH} {total_h:.0}' font-family='sans-serif'>"
    );
    for (i, (title, trace, capacity)) in entries.iter().enumerate() {
        let _ = write!(
            svg,
            "<svg x='0' y='{:.0}' width='{WIDTH}' height='{panel_h:.0}'>{}</svg>",
            i as f64 * panel_h,
            utilization_svg(trace, title, *capacity)
        );
    }
    svg.push_str("</svg>");
    svg
}
