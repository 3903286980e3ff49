//! SVG charts for the sweep and the policy comparison.

use plotters::prelude::*;

use prt_core::experiments::{CompareResult, SweepResult};
use prt_core::merge::PriorityPolicy;
use prt_core::metrics::Saturation;

type DrawResult<T> = Result<T, Box<dyn std::error::Error>>;

const SIZE: (u32, u32) = (720, 460);

fn policy_color(p: PriorityPolicy) -> RGBColor {
    match p {
        PriorityPolicy::HighwayFirst => RGBColor(0x1f, 0x77, 0xb4),
        PriorityPolicy::RoadFirst => RGBColor(0xd6, 0x27, 0x28),
        PriorityPolicy::Slider => RGBColor(0x2c, 0xa0, 0x2c),
    }
}

/// Mean ASD against fleet size, with the threshold as a dashed line.
pub fn sweep_svg(sweep: &SweepResult) -> DrawResult<String> {
    let mut out = String::new();
    {
        let root = SVGBackend::with_string(&mut out, SIZE).into_drawing_area();
        root.fill(&WHITE)?;
        let xs = sweep.points.iter().map(|p| p.0);
        let x_min = xs.clone().fold(f64::INFINITY, f64::min);
        let x_max = xs.fold(f64::NEG_INFINITY, f64::max);
        let y_max = sweep
            .points
            .iter()
            .map(|p| p.1)
            .fold(sweep.threshold, f64::max)
            * 1.15;
        let pad = ((x_max - x_min) * 0.05).max(1.0);
        let caption = match sweep.saturation {
            Saturation::At(n) => format!("ASD vs fleet size (saturation at {n:.1} vehicles)"),
            Saturation::NotSaturated => "ASD vs fleet size (threshold not reached)".to_string(),
        };
        let mut chart = ChartBuilder::on(&root)
            .caption(caption, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(55)
            .build_cartesian_2d((x_min - pad)..(x_max + pad), 0f64..y_max)?;
        chart
            .configure_mesh()
            .x_desc("vehicles")
            .y_desc("ASD [%]")
            .draw()?;
        let line = RGBColor(0x1f, 0x77, 0xb4);
        chart
            .draw_series(LineSeries::new(sweep.points.iter().copied(), line.stroke_width(2)))?
            .label("mean ASD")
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], line.stroke_width(2)));
        chart.draw_series(sweep.points.iter().map(|&p| Circle::new(p, 4, line.filled())))?;
        // dashed threshold
        let th = sweep.threshold;
        let seg = (x_max - x_min + 2.0 * pad) / 60.0;
        let dashes = (0..30).map(|i| {
            let x0 = x_min - pad + 2.0 * i as f64 * seg;
            PathElement::new(vec![(x0, th), (x0 + seg, th)], RED.stroke_width(1))
        });
        chart
            .draw_series(dashes)?
            .label(format!("threshold {th}%"))
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], RED.stroke_width(1)));
        chart
            .configure_series_labels()
            .position(SeriesLabelPosition::UpperLeft)
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()?;
        root.present()?;
    }
    Ok(out)
}

/// Mean waiting time per policy, bars grouped by demand level.
pub fn compare_svg(cmp: &CompareResult, policies: &[PriorityPolicy], demands: &[f64]) -> DrawResult<String> {
    let mut out = String::new();
    {
        let root = SVGBackend::with_string(&mut out, SIZE).into_drawing_area();
        root.fill(&WHITE)?;
        let y_max = cmp
            .cells
            .iter()
            .filter_map(|c| c.mean_wait_s)
            .fold(1.0, f64::max)
            * 1.15;
        let groups = demands.len() as f64;
        let labels: Vec<String> = demands.iter().map(|d| format!("{d} groups/h")).collect();
        let mut chart = ChartBuilder::on(&root)
            .caption("Mean waiting time by merge policy", ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(55)
            .build_cartesian_2d(0f64..groups, 0f64..y_max)?;
        chart
            .configure_mesh()
            .disable_x_mesh()
            .x_labels(demands.len() * 2 + 1)
            .x_label_formatter(&|x| {
                let k = x - 0.5;
                if k >= 0.0 && (k - k.round()).abs() < 1e-6 {
                    labels.get(k.round() as usize).cloned().unwrap_or_default()
                } else {
                    String::new()
                }
            })
            .y_desc("mean wait [s]")
            .draw()?;
        let width = 0.8 / policies.len() as f64;
        for (pi, &p) in policies.iter().enumerate() {
            let color = policy_color(p);
            let bars = demands.iter().enumerate().filter_map(|(di, &d)| {
                let w = cmp.cell(p, d)?.mean_wait_s?;
                let x0 = di as f64 + 0.1 + pi as f64 * width;
                Some(Rectangle::new([(x0, 0.0), (x0 + width * 0.9, w)], color.filled()))
            });
            chart
                .draw_series(bars)?
                .label(p.as_str())
                .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 12, y + 5)], color.filled()));
        }
        chart
            .configure_series_labels()
            .position(SeriesLabelPosition::UpperLeft)
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()?;
        root.present()?;
    }
    Ok(out)
}
