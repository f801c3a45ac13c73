//! Runs a short protocol session in process: the same lines an external
//! client would write to `talkitout serve`.

use talkitout::wire::Session;

fn main() {
    let mut session = Session::new();
    let requests = [
        r#"{"cmd":"reset","seed":7,"variant":"original"}"#,
        r#"{"cmd":"step","action":[-1,-1,-1]}"#,
        r#"{"cmd":"step","action":[2,0,1]}"#,
        r#"{"cmd":"step","action":[2,0,-1]}"#,
        r#"not json"#,
        r#"{"cmd":"close"}"#,
    ];
    for req in requests {
        let resp = session.handle_line(req);
        // the 7x7x3 image makes lines long; show the rest
        let mut shown = serde_json::to_value(&resp).expect("response serializes");
        if let Some(obs) = shown.get_mut("obs").and_then(|o| o.as_object_mut()) {
            obs.insert("image".into(), "<7x7x3>".into());
        }
        println!("> {req}\n< {shown}");
    }
}
