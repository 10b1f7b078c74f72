mod common;

use std::path::Path;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::patch_gen::{run_trial, Trial};
use narrowfix::patch::{apply, inverse, map_line, parse_diff, PatchError};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn random_patches_match_reference_splice(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = run_trial(&mut rng);
        prop_assert!(!matches!(t, Trial::Mismatch(_)), "{:?}", t);
    }

    #[test]
    fn round_trip_restores_bytes(
        lines in prop::collection::vec("[a-c ;]{0,6}", 1..20),
        crlf in any::<bool>(),
        final_eol in any::<bool>(),
        pick in any::<prop::sample::Index>(),
    ) {
        let eol = if crlf { "\r\n" } else { "\n" };
        let mut text = lines.join(eol);
        if final_eol {
            text.push_str(eol);
        }
        prop_assume!(final_eol || !lines[lines.len() - 1].is_empty());
        let i = pick.index(lines.len());
        let answer = format!("- {}\n+ changed();\n", lines[i]);
        match parse_diff(&answer, Path::new("x.cpp"), &text, i as u32 + 1) {
            Ok(p) => {
                let out = apply(&p, &text).unwrap();
                prop_assert_eq!(apply(&inverse(&p, &out), &out).unwrap(), text);
            }
            Err(PatchError::AmbiguousAnchor(..)) => {}
            Err(e) => prop_assert!(false, "unexpected {e:?}"),
        }
    }
}

#[test]
fn nearest_duplicate_wins() {
    let text = "a;\nb;\na;\nc;\nd;\na;\n";
    let p = parse_diff("- a;\n+ z;\n", Path::new("x.cpp"), text, 5).unwrap();
    assert_eq!(apply(&p, text).unwrap(), "a;\nb;\na;\nc;\nd;\nz;\n");
    let p = parse_diff("- a;\n+ z;\n", Path::new("x.cpp"), text, 3).unwrap();
    assert_eq!(apply(&p, text).unwrap(), "a;\nb;\nz;\nc;\nd;\na;\n");
    assert!(matches!(
        parse_diff("- a;\n+ z;\n", Path::new("x.cpp"), "a;\nb;\na;\n", 2),
        Err(PatchError::AmbiguousAnchor(..))
    ));
}

#[test]
fn missing_line_is_no_match() {
    assert!(matches!(
        parse_diff("- nope;\n+ z;\n", Path::new("x.cpp"), "a;\n", 1),
        Err(PatchError::NoMatch(_))
    ));
}

#[test]
fn line_mapping_follows_hunks() {
    let text = "a;\nb;\nc;\nd;\n";
    let p = parse_diff("- b;\n+ b1;\n+ b2;\n", Path::new("x.cpp"), text, 2).unwrap();
    assert_eq!(map_line(&p, 0), 0);
    assert_eq!(map_line(&p, 3), 4);
}
