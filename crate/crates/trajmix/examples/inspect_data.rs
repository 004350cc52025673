//! Summarize a longitudinal dataset: outcome histogram, a 70-subject
//! spaghetti sample, and yearly box statistics, written as SVG files.
//!
//! Run with: cargo run --example inspect_data

use trajmix::svg::{self, Series};
use trajmix::{inspect, make_datacog};

fn main() -> trajmix::Result<()> {
    let data = make_datacog(12345);
    let summary = inspect(&data, 1);

    println!("spaghetti sample: {} subjects", summary.spaghetti.len());
    for bucket in summary.yearly.iter().filter(|b| b.n > 0).take(5) {
        println!(
            "year {:>3}: median {:+.2} (q1 {:+.2}, q3 {:+.2}, n {})",
            bucket.year, bucket.median, bucket.q1, bucket.q3, bucket.n
        );
    }

    std::fs::write(
        "inspect_histogram.svg",
        svg::histogram("distribution of cognition", "cognition", &summary.histogram),
    )?;
    let point_sets: Vec<Vec<(f64, f64)>> = summary
        .spaghetti
        .iter()
        .map(|(_, obs)| obs.iter().map(|o| (o.time, o.outcome)).collect())
        .collect();
    let series: Vec<Series> = summary
        .spaghetti
        .iter()
        .zip(&point_sets)
        .map(|((id, _), pts)| Series {
            label: id,
            points: pts,
        })
        .collect();
    std::fs::write(
        "inspect_spaghetti.svg",
        svg::line_chart(
            "individual trajectories",
            "years before death",
            "cognition",
            &series,
        ),
    )?;
    std::fs::write(
        "inspect_yearly.svg",
        svg::boxplot(
            "yearly distribution",
            "years before death",
            "cognition",
            &summary.yearly,
        ),
    )?;
    println!("wrote inspect_histogram.svg, inspect_spaghetti.svg, inspect_yearly.svg");
    Ok(())
}
