//! Runs every example as a test.

macro_rules! example {
    ($name:ident) => {
        #[allow(dead_code)]
        mod $name {
            include!(concat!(
                env!("CARGO_MANIFEST_DIR"),
                "/examples/",
                stringify!($name),
                ".rs"
            ));
        }

        #[test]
        fn $name() {
            $name::run().unwrap();
        }
    };
}

example!(degradation_cost);
example!(synthetic_prices);
example!(fleet_scenario);
example!(cost_schedule);
example!(menu_quote);
example!(dump_lp_model);
example!(rolling_day);
example!(tariff_tuning);
example!(scheme_comparison);
example!(price_noise);
example!(menu_size_sweep);
example!(run_config);
example!(cli_run);
