use mhol::features::parse_tsv_record;
use mhol::Schema;

const SCHEMA: &str = include_str!("../../../docs/criteo-2020.schema");

fn line(sale: &str, value: &str, delay: &str, price: &str) -> String {
    let mut cells = vec![sale, value, delay, "1596439471", "3", price];
    let cats = ["-1", "1", "A", "B", "C", "D", "E", "F", "G", "H", "I", "J", "FR", "P17"];
    cells.extend(cats);
    cells.extend(["T1,T2", "partner9", "U42"]);
    assert_eq!(cells.len(), 23);
    cells.join("\t")
}

#[test]
fn converted_line() {
    let schema = Schema::parse(SCHEMA).unwrap();
    let r = parse_tsv_record(&line("1", "21.5", "3600", "12.0"), 7, &schema).unwrap();
    assert_eq!(r.click_id, "7");
    assert_eq!(r.click_ts, 1596439471);
    assert_eq!(r.conversion_delay, Some(3600));
    assert_eq!(r.conversion_value, Some(21.5));
    let names: Vec<&str> = r.fields.iter().map(|(n, _)| n.as_str()).collect();
    assert!(names.contains(&"partner_id") && names.contains(&"product_id"));
    assert!(!names.iter().any(|n| n.contains("user") || n.contains("title")));
    let field = |n: &str| r.fields.iter().find(|(k, _)| k == n).unwrap().1.clone();
    assert_eq!(field("nb_clicks_1week"), "b3");
    assert_eq!(field("product_price"), "b4");
}

#[test]
fn unconverted_line_with_missing_cells() {
    let schema = Schema::parse(SCHEMA).unwrap();
    let r = parse_tsv_record(&line("0", "-1", "-1", "-1"), 1, &schema).unwrap();
    assert!(!r.converted());
    assert_eq!(r.conversion_value, None);
    let price = r.fields.iter().find(|(k, _)| k == "product_price").unwrap();
    assert_eq!(price.1, "missing");
}

#[test]
fn wrong_width_is_a_parse_error() {
    let schema = Schema::parse(SCHEMA).unwrap();
    let short = line("0", "-1", "-1", "1").replacen('\t', "", 1);
    assert!(parse_tsv_record(&short, 3, &schema).is_err());
}
