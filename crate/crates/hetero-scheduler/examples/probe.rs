fn main() {
    let negative = r#"
        sequential_ms = -1.0
        [copy]
        base_ms = 0.0
        ms_per_byte = 0.0
    "#;
    match hetero_scheduler::parse_profile(negative) {
        Ok(p) => println!("parsed?! {p:?}"),
        Err(e) => println!("err: {e:?}"),
    }
}
