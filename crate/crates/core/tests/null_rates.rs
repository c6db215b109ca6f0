use sphericity::montecarlo::{run_experiment, AlternativeDesign, Experiment, Scenario};
use sphericity::TestId;

#[test]
fn corrected_tests_hold_their_level_at_128_by_256() {
    for scenario in [Scenario::StandardNormal, Scenario::Gamma42Shifted] {
        let e = Experiment::new(vec![TestId::Clrt, TestId::Cj], scenario, AlternativeDesign::Null, 128, 256)
            .reps(10_000)
            .seed(11);
        for r in run_experiment(&e).unwrap() {
            let rate = r.rejection_rate.value();
            assert!((0.035..=0.065).contains(&rate), "{} {}: {rate}", scenario.as_str(), r.test);
        }
    }
}
