mod props;

const CASES: u32 = 10_000;

fn check(suite: &str) {
    if let Err(e) = props::run_suite(suite, CASES) {
        panic!("{suite}: {e}");
    }
}

#[test]
fn geometry() {
    check("geometry");
}

#[test]
fn depth() {
    check("depth");
}

#[test]
fn clustering() {
    check("clustering");
}

#[test]
fn evaluation() {
    check("evaluation");
}

#[test]
fn filter() {
    check("filter");
}

#[test]
fn answer_parsing() {
    check("answer parsing");
}
