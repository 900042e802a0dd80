use proptest::prelude::*;

use scalarexp::templates::{build_cross_scale, build_within_scale, CrossScaleStimulus, ScalarConstruction};
use scalarexp::{DatasetId, PartOfSpeech, Scale, ScoringMode, StimulusItem};

fn cross(weak: &str, strong: &str, pos: PartOfSpeech, context: &str) -> ScalarConstruction {
    let scale = Scale::new(weak, strong, pos).unwrap();
    build_cross_scale(&CrossScaleStimulus::from_context(&scale, context).unwrap()).unwrap()
}

fn within(context: &str) -> ScalarConstruction {
    build_within_scale(&StimulusItem {
        dataset_id: DatasetId::Degen2015,
        scale: Scale::some_all(),
        context: context.into(),
        human_si: 4.0,
        covariates: Default::default(),
        cloze_accessibility: None,
        weak_offset: None,
    })
    .unwrap()
}

#[test]
fn adjective_frame() {
    let c = cross("big", "enormous", PartOfSpeech::Adj, "The elephant is big.");
    assert_eq!(c.full_text(), "The elephant is big, but not enormous");
    assert_eq!(c.prefix(), "The elephant is big, but not ");
    assert_eq!(c.slot_text(), "enormous");
    assert_eq!(c.suffix(), "");
    assert_eq!(c.mode(), ScoringMode::Continuation);
}

#[test]
fn adverb_frame() {
    let c = cross(
        "sometimes",
        "always",
        PartOfSpeech::Adv,
        "The director is sometimes late.",
    );
    assert_eq!(c.full_text(), "The director is sometimes late, but not always");
    assert_eq!(c.slot_text(), "always");
    assert_eq!(c.suffix(), "");
}

#[test]
fn verb_frame() {
    let c = cross("start", "finish", PartOfSpeech::Verb, "The runner started.");
    assert_eq!(c.full_text(), "The runner started, but did not finish");
    assert_eq!(c.slot_text(), "finish");
    assert_eq!(c.suffix(), "");
}

#[test]
fn within_scale_country_music() {
    let c = within("I like some country music.");
    assert_eq!(c.full_text(), "I like some, but not all, country music.");
    assert_eq!(c.slot_text(), "all");
    assert_eq!(c.prefix(), "I like some, but not ");
    assert_eq!(c.suffix(), ", country music.");
    assert_eq!(c.mode(), ScoringMode::MaskedSlot);
}

#[test]
fn within_scale_appreciate() {
    let c = within("It would certainly help them to appreciate some of the things that we have here.");
    assert_eq!(
        c.full_text(),
        "It would certainly help them to appreciate some, but not all, of the things that we have here."
    );
    assert_eq!(c.slot_text(), "all");
}

fn word() -> impl Strategy<Value = String> {
    "[a-z]{2,9}"
}

proptest! {
    #[test]
    fn slot_substitution_round_trips(np in "[A-Z][a-z]{1,8}( [a-z]{2,8}){0,2}", weak in word(), strong in word()) {
        prop_assume!(weak != strong && weak != "is" && weak != "was");
        let scale = Scale::new(&weak, &strong, PartOfSpeech::Adj).unwrap();
        let c = build_cross_scale(&CrossScaleStimulus::new(&scale, &np)).unwrap();
        prop_assert!(c.full_text().ends_with(&strong));
        prop_assert_eq!(c.suffix(), "");
        prop_assert_eq!(c.with_slot(&strong), c.full_text());
        prop_assert_eq!(format!("{}{}{}", c.prefix(), c.slot_text(), c.suffix()), c.full_text());
    }

    #[test]
    fn within_scale_only_inserts_the_phrase(before in "([A-Z][a-z]{1,6} ){1,4}", after in "( [a-z]{2,7}){1,5}") {
        prop_assume!(!before.to_lowercase().contains("some") && !after.contains("some"));
        let context = format!("{before}some{after}.");
        let c = within(&context);
        prop_assert_eq!(c.full_text().replacen(", but not all,", "", 1), context);
        prop_assert_eq!(c.with_slot("all"), c.full_text());
    }
}
