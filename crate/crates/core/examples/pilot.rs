//! Scratch pilot runs used during development; removed before release.

use fracsde::expr::Coefficient;
use fracsde::flow::FlowSolver;

fn main() {
    let c = Coefficient::parse("2 + sin(x)").unwrap();
    let flow = FlowSolver::new(&c).unwrap();
    for m in 0..=2usize {
        for &x in &[-1.0, 0.0, 1.0] {
            let diffs: Vec<String> = (4..=10)
                .map(|k| {
                    let y = 2.0f64.powi(-k);
                    let d = (flow.eval(x, y).unwrap() - flow.taylor(x, y, m)).abs();
                    format!("2^-{k}:{d:.2e}")
                })
                .collect();
            println!("m={m} x={x:+}: {}", diffs.join(" "));
        }
    }
}
