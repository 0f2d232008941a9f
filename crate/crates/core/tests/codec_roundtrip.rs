use proptest::prelude::*;
use voxkit_core::codec::{
    parse_assistant_output, parse_observation, serialize_action, serialize_observation, serialize_output, CodecConfig,
};
use voxkit_core::model::{AgentAction, ArgValue, ObservationEvent, ReasoningTrace, ToolCall};

fn arg_value() -> impl Strategy<Value = ArgValue> {
    let leaf = prop_oneof![
        any::<bool>().prop_map(ArgValue::Boolean),
        any::<i32>().prop_map(|n| ArgValue::int(n.into())),
        (-1.0e6..1.0e6f64).prop_map(ArgValue::float),
        "[a-zA-Z0-9 ,.'\"é_-]{0,16}".prop_map(ArgValue::text),
    ];
    leaf.prop_recursive(3, 16, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(ArgValue::List),
            prop::collection::btree_map("[a-z_]{1,8}", inner, 0..4).prop_map(ArgValue::map),
        ]
    })
}

fn tool_call() -> impl Strategy<Value = ToolCall> {
    (
        "[a-z][a-z_.]{0,15}",
        prop::collection::btree_map("[a-z_]{1,10}", arg_value(), 0..4),
    )
        .prop_map(|(name, args)| args.into_iter().fold(ToolCall::new(name), |c, (k, v)| c.arg(k, v)))
}

proptest! {
    #[test]
    fn tool_calls_round_trip(calls in prop::collection::vec(tool_call(), 1..4)) {
        let action = AgentAction::invoke(calls).unwrap();
        let text = serialize_action(&action);
        let parsed = parse_assistant_output(&text).unwrap();
        prop_assert_eq!(&parsed.action, &action);
        prop_assert_eq!(serialize_action(&parsed.action), text);
    }

    #[test]
    fn full_output_round_trip(
        think in "[a-zA-Z ,.]{0,40}",
        calls in prop::collection::vec(tool_call(), 1..3),
    ) {
        let trace = ReasoningTrace::new(think.clone());
        let action = AgentAction::invoke(calls).unwrap();
        let text = serialize_output(&trace, &action, &CodecConfig::default());
        let parsed = parse_assistant_output(&text).unwrap();
        prop_assert_eq!(parsed.trace.text, think.trim());
        prop_assert_eq!(parsed.action, action);
    }

    #[test]
    fn speech_round_trip(text in "[A-Za-z][A-Za-z0-9 ,.!?']{0,60}[A-Za-z.!?]") {
        let action = AgentAction::speak(text.clone());
        let parsed = parse_assistant_output(&serialize_action(&action)).unwrap();
        prop_assert_eq!(parsed.action, action);
    }

    #[test]
    fn observations_round_trip(results in prop::collection::vec(("[a-z_.]{1,12}", arg_value()), 1..4)) {
        let events: Vec<ObservationEvent> =
            results.into_iter().map(|(n, v)| ObservationEvent::feedback(n, v)).collect();
        let text = serialize_observation(&events).unwrap();
        let back = parse_observation(&text).unwrap();
        prop_assert_eq!(&back, &events);
        prop_assert_eq!(serialize_observation(&back).unwrap(), text);
    }
}
