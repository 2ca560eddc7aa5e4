//! Hand-labelled well-formedness corpus. Positions are 1-based and point
//! at the first byte of the offending token.

pub const MALFORMED: &[(&str, usize, usize)] = &[
    ("", 1, 1),
    ("   ", 1, 4),
    ("<a>", 1, 4),
    ("<a><b></a></b>", 1, 7),
    ("<a></b>", 1, 4),
    ("<a/><b/>", 1, 5),
    ("text<a/>", 1, 1),
    ("<a/>text", 1, 5),
    ("<a x='1' x='2'/>", 1, 10),
    ("<a x=1/>", 1, 6),
    ("<a x='<'/>", 1, 7),
    ("<a>&bogus;</a>", 1, 4),
    ("<a>a & b</a>", 1, 6),
    ("<a>&#0;</a>", 1, 4),
    ("<a><!-- x -- y --></a>", 1, 11),
    ("<a><!-- x </a>", 1, 4),
    ("<a x='1'y='2'/>", 1, 9),
    ("<a x/>", 1, 5),
    ("<1a/>", 1, 2),
    ("<a>< b/></a>", 1, 4),
    ("<a x='1></a>", 1, 9),
    ("<a x=\"1'/>", 1, 11),
    ("<a>\n  <b>\n</a>", 3, 1),
    ("<a>\n<b x='1' x='2'/>\n</a>", 2, 10),
    ("<a>\n\n  & </a>", 3, 3),
    ("<a></a", 1, 7),
    ("<a b='1'", 1, 9),
    ("<a/ >", 1, 3),
    ("<a>&amp</a>", 1, 4),
    ("<a>&#xZZ;</a>", 1, 4),
    ("<a x='1'></a x>", 1, 14),
    ("<a x='&lt'/>", 1, 7),
    ("<a>\u{1}</a>", 1, 4),
    ("<a><b></b></a></a>", 1, 15),
    ("<a><b><c></b></c></a>", 1, 10),
    ("<a>\n</A>", 2, 1),
    ("<a><!-- x ---></a>", 1, 11),
    ("<a>\r\n<b>\r\n</a>", 3, 1),
    ("<a\tx='1'\ty='2'\tx='3'/>", 1, 16),
    ("<a>\n  <b>\n    <c/>\n  </d>\n</a>", 4, 3),
    ("<?xml version='1.0'?><?xml version='1.0'?><a/>", 1, 22),
    ("  <?xml version='1.0'?><a/>", 1, 3),
    ("<a>ok]]></a>", 1, 6),
    ("<a>&#65</a>", 1, 4),
    ("<a x= />", 1, 7),
    ("<a =''/>", 1, 4),
    ("<>", 1, 2),
    ("</a>", 1, 2),
    ("<a><b></a>", 1, 7),
    ("<a>\n</a>\n<b/>", 3, 1),
];

pub const WELL_FORMED: &[&str] = &[
    "<a/>",
    "<a></a>",
    "<a>text</a>",
    "<?xml version=\"1.0\"?><a/>",
    "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<a/>\n",
    "<!-- c --><a/><!-- d -->",
    "<a x='1' y=\"2\"/>",
    "<a x='&lt;&amp;&gt;&quot;&apos;'/>",
    "<a>&#65;&#x42;</a>",
    "<a><b/><c><d/></c></a>",
    "<a>\n  <b>t</b>\n</a>",
    "<a x = '1'/>",
    "<a\n x='1'\n/>",
    "<a.b-c_d/>",
    "<_a/>",
    "<a>x<b/>y</a>",
    "<a x=\"'\" y='\"'/>",
    "<a>&#10;&#9;</a>",
    "<a></a   >",
    "<a><!-- - --></a>",
    "<a>a > b</a>",
    "<work-order id='WO-1'/>",
    "<a>\r\n</a>",
    "<a x=''/>",
    "<a><b></b><b></b></a>",
];
