mod common;

use common::{arb_formula, vars};
use proptest::prelude::*;
use tlps_core::parser::ParseErrorKind;
use tlps_core::{parse, parse_spec};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn display_round_trips((dim, phi) in (1usize..=2).prop_flat_map(|d| (Just(d), arb_formula(d, 4)))) {
        let v = vars(dim);
        let text = phi.display(&v).to_string();
        let back = parse(&text, &v).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
        prop_assert_eq!(back, phi, "{}", text);
    }

    #[test]
    fn arbitrary_text_never_panics(text in "[ -~]{0,40}") {
        let _ = parse(&text, &vars(2));
        let _ = parse_spec(&text);
    }
}

#[test]
fn unknown_variable_is_reported_with_position() {
    let err = parse("F q > 1", &vars(1)).unwrap_err();
    assert_eq!((err.line, err.column), (1, 3));
    assert!(matches!(err.kind, ParseErrorKind::UnknownVariable(ref n) if n == "q"));
}

#[test]
fn spec_file_declarations_define_the_map() {
    let spec = parse_spec("# band\nvar s: 0;\nF (s > 5 & s < 10)\n").unwrap();
    assert_eq!(spec.vars.dim(), 1);
    assert_eq!(spec.formula.predicates().len(), 2);
    assert_eq!(parse_spec(&spec.to_string()).unwrap(), spec);
}
