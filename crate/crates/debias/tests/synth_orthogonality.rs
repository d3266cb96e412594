//! With a single nonzero effect strength, band powers reveal that attribute
//! and no other.

use debias::pipeline::{synthesize_prepared, PreparedSubject};
use debias_core::eval::probe_accuracy;
use debias_core::spectrogram::StftConfig;
use debias_core::synth::{Demographics, EffectStrengths, Gender, Smoking, SynthesisSpec};

const SIZE: usize = 32;
const PER_CELL: usize = 75;

fn corpus(effects: EffectStrengths, disease: f64) -> Vec<PreparedSubject> {
    let demo = Demographics::uniform_ages([[[PER_CELL; 2]; 2]; 2]);
    let spec = SynthesisSpec {
        n_subjects: demo.total(),
        disease_prevalence: 0.5,
        confound_effects: effects,
        disease_effect_strength: disease,
        seed: 11,
    };
    synthesize_prepared(&spec, &demo, &StftConfig::default(), &[SIZE]).unwrap()
}

/// Mean of each frequency row.
fn band_powers(p: &PreparedSubject) -> Vec<f64> {
    p.inputs[0].chunks(SIZE).map(|row| row.iter().sum::<f64>() / SIZE as f64).collect()
}

type Attr = (&'static str, fn(&PreparedSubject) -> bool);

const ATTRS: [Attr; 4] = [
    ("disease", |p| p.record.label.is_diseased()),
    ("gender", |p| p.record.profile.gender == Gender::Female),
    ("age", |p| p.record.profile.age_years >= 48),
    ("smoking", |p| p.record.profile.smoking == Smoking::Smoker),
];

/// Probe accuracy per attribute, trained on even and scored on odd subjects.
fn accuracies(pool: &[PreparedSubject]) -> Vec<f64> {
    let x: Vec<Vec<f64>> = pool.iter().map(band_powers).collect();
    ATTRS
        .iter()
        .map(|(_, f)| {
            let y: Vec<bool> = pool.iter().map(f).collect();
            let pick = |parity: usize| -> (Vec<Vec<f64>>, Vec<bool>) {
                (0..pool.len()).filter(|i| i % 2 == parity).map(|i| (x[i].clone(), y[i])).unzip()
            };
            let ((tx, ty), (vx, vy)) = (pick(0), pick(1));
            probe_accuracy(&tx, &ty, &vx, &vy).unwrap()
        })
        .collect()
}

#[test]
fn each_effect_is_visible_only_through_its_own_attribute() {
    let conditions = [
        ("disease", EffectStrengths::NONE, 1.0),
        ("gender", EffectStrengths { gender: 1.0, ..EffectStrengths::NONE }, 0.0),
        ("age", EffectStrengths { age: 1.0, ..EffectStrengths::NONE }, 0.0),
        ("smoking", EffectStrengths { smoking: 1.0, ..EffectStrengths::NONE }, 0.0),
    ];
    for (active, effects, disease) in conditions {
        let pool = corpus(effects, disease);
        assert!(pool.len() / 2 >= 200, "{} scored subjects", pool.len() / 2);
        let accs = accuracies(&pool);
        for ((name, _), acc) in ATTRS.iter().zip(accs) {
            if *name == active {
                assert!(acc > 0.65, "{active} effect: {name} probe only {acc}");
            } else {
                assert!(acc <= 0.55, "{active} effect leaks into {name}: {acc}");
            }
        }
    }
}
