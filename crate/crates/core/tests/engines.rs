//! Baseline engines on one desk-scale cell.

use scu_core::unlearn::Method;
use scu_core::{ExperimentConfig, PreparedCell};

#[test]
fn baselines_behave_as_expected_on_a_desk_cell() {
    let cfg = ExperimentConfig::default();
    let channel = cfg.channel.configs()[0];
    let cell = PreparedCell::prepare(&cfg, 0.06, channel, 0).unwrap();
    assert!(cell.pre.mse_clean < 0.05, "trained codec mse {}", cell.pre.mse_clean);
    assert!(cell.pre.backdoor_acc >= 0.85, "backdoor not learned: {}", cell.pre.backdoor_acc);

    let run = |m: Method| {
        let (codec, report, _) = cell.apply(m, &cfg.train, &cfg.unlearn).unwrap();
        (cell.headline(&codec).unwrap(), report.unwrap().seconds)
    };
    let (scu, scu_s) = run(Method::Scu);
    let (vbu, vbu_s) = run(Method::Vbu);
    let (hbu, hbu_s) = run(Method::Hbu);

    assert!(vbu.backdoor_acc <= 0.15, "vbu backdoor {}", vbu.backdoor_acc);
    assert!(vbu.mse_clean > scu.mse_clean, "vbu {} scu {}", vbu.mse_clean, scu.mse_clean);
    assert!(hbu.backdoor_acc <= 0.15, "hbu backdoor {}", hbu.backdoor_acc);
    assert!(hbu_s > scu_s && hbu_s > vbu_s, "hbu {hbu_s} scu {scu_s} vbu {vbu_s}");
}
