//! Run the quick oracle suites from code.

fn main() {
    for report in renyi_smooth::selftest::run_all(true, 0) {
        println!("{report:?}");
    }
}
