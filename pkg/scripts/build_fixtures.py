#!/usr/bin/env python3
"""Author the bundled world, oracle-rule and trajectory-suite fixtures.

Run once; the outputs under ``src/webrecall/data`` are committed and frozen.
The script also checks the properties the fixtures were designed for
(page counts, reachability, distinct queries, and the base policy's
behaviour on every benchmark task) and refuses to write files that violate them.

    python3 scripts/build_fixtures.py
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "src" / "webrecall" / "data"
sys.path.insert(0, str(ROOT / "src"))

from webrecall.core import Action, FailureLabel  # noqa: E402
from webrecall.env import find_solution, parse_world, replay  # noqa: E402
from webrecall.memory import Embedder, cosine  # noqa: E402
from webrecall.policies import ScriptedPolicy  # noqa: E402
from webrecall.runtime import label_episode, run_episode  # noqa: E402

PEOPLE = [
    "Grace Nguyen", "John Lee", "Sarah Miller", "Alex Johnson", "Maria Garcia", "Wei Chen",
    "Priya Patel", "Omar Haddad", "Lena Fischer", "Diego Torres", "Aisha Bello", "Tom Novak",
]

SORT_HINT = (
    "The list is shown oldest first, so its first row is not the newest one. "
    "Click 'Sort by Date' before reading the first row."
)
PESSIMISTIC = "The answer was wrong. The requested information may not be available on this site."


def slug(text: str) -> str:
    return "".join(c if c.isalnum() else "-" for c in text.lower()).strip("-")


def el(id_: str, role: str, text: str = "", **attrs: str) -> dict:
    d = {"id": id_, "role": role, "text": text}
    if attrs:
        d["attrs"] = attrs
    return d


def click(element_id: str, dest: str) -> dict:
    return {"action_kind": "click", "element_id": element_id, "dest": dest}


@dataclass
class ListDef:
    name: str
    singular: str
    prefix: str
    sort_label: str = "Sort by Date"
    rows: list[str] | None = None  # default-order rows; sorted view is their reverse

    @property
    def slug(self) -> str:
        return slug(self.name)


@dataclass
class SectionDef:
    name: str
    lists: list[ListDef]

    @property
    def slug(self) -> str:
        return slug(self.name)

    def link_text(self) -> str:
        return f"{self.name}: " + ", ".join(lst.name.lower() for lst in self.lists)


@dataclass
class SiteDef:
    site_id: str
    title: str
    decoys: list[str]
    sections: list[SectionDef]
    extra_pages: list[dict] = field(default_factory=list)

    def list_locator(self, list_name: str) -> tuple[SectionDef, ListDef, str]:
        for sec in self.sections:
            for lst in sec.lists:
                if lst.name == list_name:
                    return sec, lst, f"{sec.slug}/{lst.slug}"
        raise KeyError(list_name)


def default_rows(lst: ListDef, index: int) -> list[str]:
    rows = []
    for i in range(5):
        person = PEOPLE[(index * 5 + i * 7) % len(PEOPLE)]
        rows.append(f"{lst.prefix}-{1001 + index * 10 + i} | {person} | 2023-{1 + i * 2:02d}-{3 + index % 20:02d}")
    return rows


def build_site(site: SiteDef) -> dict:
    pages: list[dict] = []
    root = "home"
    root_elements = [el("00-title", "heading", f"{site.title} dashboard")]
    root_affs = []
    for i, decoy in enumerate(site.decoys, 1):
        eid = f"0{i}-{slug(decoy)}"
        root_elements.append(el(eid, "link", decoy))
        root_affs.append(click(eid, f"info/{slug(decoy)}"))
        pages.append(
            {
                "locator": f"info/{slug(decoy)}",
                "elements": [el("00-title", "heading", decoy), el("10-note", "text", "Nothing new here."), el("90-home", "link", "Home")],
                "affordances": [click("90-home", root)],
            }
        )
    list_index = 0
    for si, sec in enumerate(site.sections, 1):
        eid = f"1{si}-{sec.slug}"
        root_elements.append(el(eid, "link", sec.link_text()))
        root_affs.append(click(eid, sec.slug))
        sec_elements = [el("00-title", "heading", sec.name), el("90-home", "link", "Home")]
        sec_affs = [click("90-home", root)]
        for li, lst in enumerate(sec.lists, 1):
            loc = f"{sec.slug}/{lst.slug}"
            lid = f"1{li}-{lst.slug}"
            sec_elements.append(el(lid, "link", lst.name))
            sec_affs.append(click(lid, loc))
            rows = lst.rows or default_rows(lst, list_index)
            list_index += 1
            sort_slug = slug(lst.sort_label.replace("Sort by", "")) or "sorted"
            sorted_loc = f"{loc}?sort={sort_slug}"
            pages.append(
                {
                    "locator": loc,
                    "elements": [
                        el("00-title", "heading", lst.name),
                        *[el(f"r{r + 1}", "row", text) for r, text in enumerate(rows)],
                        el("50-sort", "button", lst.sort_label),
                        el("90-home", "link", "Home"),
                    ],
                    "affordances": [click("50-sort", sorted_loc), click("90-home", root)],
                }
            )
            pages.append(
                {
                    "locator": sorted_loc,
                    "elements": [
                        el("00-title", "heading", f"{lst.name} ({lst.sort_label.lower()})"),
                        *[el(f"r{r + 1}", "row", text) for r, text in enumerate(reversed(rows))],
                        el("50-clear-sort", "button", "Clear sort"),
                        el("90-home", "link", "Home"),
                    ],
                    "affordances": [click("50-clear-sort", loc), click("90-home", root)],
                }
            )
        pages.append({"locator": sec.slug, "elements": sec_elements, "affordances": sec_affs})
    pages.append({"locator": root, "elements": root_elements, "affordances": root_affs})
    pages.extend(site.extra_pages)
    return {"site_id": site.site_id, "root": root, "pages": sorted(pages, key=lambda p: p["locator"])}


def first_cell(row: str) -> str:
    return row.split(" | ")[0]


@dataclass
class TaskDef:
    kind: str  # A, A+detour, B, C, D, or custom
    site: str
    list_name: str
    text: str
    hint: str | None = None  # reflection rationale for sort traps


def list_rows(site: SiteDef, list_name: str) -> list[str]:
    index = 0
    for sec in site.sections:
        for lst in sec.lists:
            if lst.name == list_name:
                return lst.rows or default_rows(lst, index)
            index += 1
    raise KeyError(list_name)


def task_record(site: SiteDef, t: TaskDef, task_id: str) -> dict:
    sec, lst, loc = site.list_locator(t.list_name)
    rows = list_rows(site, t.list_name)
    sorted_answer = t.kind in ("B", "D")
    answer = first_cell(rows[-1] if sorted_answer else rows[0])
    return {
        "query": {"id": task_id, "text": t.text, "site": site.site_id},
        "key_obs": [loc],
        "validator": {"kind": "answer_equals", "expected": answer},
    }


def task_rules(site: SiteDef, t: TaskDef) -> list[dict]:
    sec, lst, loc = site.list_locator(t.list_name)
    q = t.text
    rules = [
        {"role": "classify_error", "verdict": "navigation_failure", "query_contains": q, "context_lacks": [f"[page {loc}]"]},
        {"role": "classify_error", "verdict": "execution_failure", "query_contains": q},
        {"role": "relevance", "verdict": True, "query_contains": q, "context_contains": [f"page: {loc}\n"]},
    ]
    for page in ("home", sec.slug, loc):
        rules.append({"role": "heuristic", "verdict": 0.9, "query_contains": q, "context_contains": [f"page: {page}\n"]})
    if t.hint:
        rules.append({"role": "reflect", "verdict": t.hint, "query_contains": q})
    return rules


# ---------------------------------------------------------------------------
# Benchmark world: three sites, 40 tasks


def bench_sites() -> list[SiteDef]:
    L = ListDef
    cms = SiteDef(
        "cms",
        "Store admin",
        ["Recent activity", "Latest news", "Quick tips", "Help center"],
        [
            SectionDef("Sales", [L("Orders", "order", "ORD"), L("Invoices", "invoice", "INV"), L("Shipments", "shipment", "SHP"), L("Credit memos", "credit memo", "CM")]),
            SectionDef("Catalog", [L("Products", "product", "SKU"), L("Categories", "category", "CAT"), L("Attributes", "attribute", "ATT"), L("Price rules", "price rule", "PR")]),
            SectionDef("Customers", [L("Accounts", "account", "ACC"), L("Groups", "group", "GRP"), L("Segments", "segment", "SEG"), L("Addresses", "address", "ADR")]),
            SectionDef("Marketing", [L("Promotions", "promotion", "PRM"), L("Reviews", "review", "REV"), L("Newsletters", "newsletter", "NWS"), L("Search terms", "search term", "TRM")]),
            SectionDef("Reports", [L("Bestsellers", "bestseller", "BST"), L("Low stock", "low stock item", "LOW"), L("Refunds", "refund", "RFD"), L("Taxes", "tax", "TAX")]),
        ],
    )
    shop = SiteDef(
        "shop",
        "Shop",
        ["Trending now", "Style guide", "Today's picks", "Hot offers"],
        [
            SectionDef("Account", [L("Addresses", "address", "AD"), L("Payment cards", "payment card", "PC"), L("Wishlists", "wishlist", "WL"), L("Coupons", "coupon", "CP")]),
            SectionDef("Orders", [L("Returns", "return", "RT"), L("Receipts", "receipt", "RC"), L("Subscriptions", "subscription", "SB"), L("Gift cards", "gift card", "GC")]),
            SectionDef("Catalog", [L("Laptops", "laptop", "LP"), L("Phones", "phone", "PH"), L("Cameras", "camera", "CA"), L("Headphones", "headphone", "HP")]),
            SectionDef("Help", [L("Tickets", "ticket", "TK"), L("Manuals", "manual", "MN"), L("Warranties", "warranty", "WR"), L("Recalls", "recall", "RL")]),
            SectionDef("Deals", [L("Bundles", "bundle", "BU"), L("Clearance", "clearance item", "CL"), L("Vouchers", "voucher", "VC"), L("Flash sales", "flash sale", "FS")]),
        ],
    )
    forum = SiteDef(
        "forum",
        "Forum",
        ["Hot threads", "Latest posts", "Community rules", "Top tags"],
        [
            SectionDef("Boards", [L("Announcements", "announcement", "AN"), L("General chat", "general chat", "GC"), L("Help desk", "help desk", "HD"), L("Marketplace", "marketplace", "MP")]),
            SectionDef("Members", [L("Moderators", "moderator", "MO"), L("Newcomers", "newcomer", "NC"), L("Banned users", "banned user", "BU"), L("Badges", "badge", "BG")]),
            SectionDef("Messages", [L("Inbox", "inbox", "IN"), L("Sent mail", "sent mail", "SM"), L("Drafts", "draft", "DR"), L("Archive", "archive", "AR")]),
            SectionDef("Events", [L("Meetups", "meetup", "MU"), L("Webinars", "webinar", "WB"), L("Contests", "contest", "CT"), L("Polls", "poll", "PL")]),
            SectionDef("Settings", [L("Notifications", "notification", "NT"), L("Privacy options", "privacy option", "PO"), L("Themes", "theme", "TH"), L("Blocked words", "blocked word", "BW")]),
        ],
    )
    return [cms, shop, forum]


def a_text(name: str, singular: str, decoy_word: str = "") -> str:
    adj = f"{decoy_word} " if decoy_word else ""
    return f"Open the {adj}{name.lower()} list and tell me the first {singular} shown."


def b_text(singular: str) -> str:
    return f"Which {singular} is the newest by date?"


def c_text(synonym: str, decoy_word: str) -> str:
    return f"Which of the {synonym} comes first on the {decoy_word} feed?"


def d_text(synonym: str, decoy_word: str) -> str:
    return f"Among the {synonym}, which is the newest by date on the {decoy_word} board?"


def bench_tasks() -> list[TaskDef]:
    T = TaskDef
    return [
        # cms: 4 A, 3 B, 5 C, 2 D
        T("A+detour", "cms", "Orders", a_text("Orders", "order", "recent")),
        T("A", "cms", "Invoices", a_text("Invoices", "invoice")),
        T("A", "cms", "Products", a_text("Products", "product")),
        T("A+detour", "cms", "Refunds", a_text("Refunds", "refund", "latest")),
        T("B", "cms", "Shipments", b_text("shipment"), SORT_HINT),
        T("B", "cms", "Promotions", b_text("promotion"), SORT_HINT),
        T("B", "cms", "Bestsellers", b_text("bestseller"), SORT_HINT),
        T("C", "cms", "Invoices", c_text("bills", "recent")),
        T("C", "cms", "Products", c_text("merchandise items", "latest")),
        T("C", "cms", "Shipments", c_text("deliveries", "quick")),
        T("C", "cms", "Newsletters", c_text("mailings", "recent")),
        T("C", "cms", "Segments", c_text("cohorts", "latest")),
        T("D", "cms", "Promotions", d_text("discount campaigns", "recent"), SORT_HINT),
        T("D", "cms", "Bestsellers", d_text("top sellers", "latest"), SORT_HINT),
        # shop: 3 A, 3 B, 4 C, 3 D
        T("A+detour", "shop", "Laptops", a_text("Laptops", "laptop", "trending")),
        T("A", "shop", "Receipts", a_text("Receipts", "receipt")),
        T("A", "shop", "Tickets", a_text("Tickets", "ticket")),
        T("B", "shop", "Phones", b_text("phone"), SORT_HINT),
        T("B", "shop", "Returns", b_text("return"), SORT_HINT),
        T("B", "shop", "Warranties", b_text("warranty"), PESSIMISTIC),
        T("C", "shop", "Laptops", c_text("notebook computers", "trending")),
        T("C", "shop", "Receipts", c_text("purchase slips", "hot")),
        T("C", "shop", "Tickets", c_text("support requests", "trending")),
        T("C", "shop", "Manuals", c_text("user guides", "hot")),
        T("D", "shop", "Phones", d_text("mobile handsets", "trending"), SORT_HINT),
        T("D", "shop", "Returns", d_text("sent back parcels", "hot"), SORT_HINT),
        T("D", "shop", "Clearance", d_text("markdown items", "trending"), SORT_HINT),
        # forum: 3 A, 2 B, 5 C, 3 D
        T("A+detour", "forum", "Announcements", a_text("Announcements", "announcement", "latest")),
        T("A", "forum", "Moderators", a_text("Moderators", "moderator")),
        T("A", "forum", "Meetups", a_text("Meetups", "meetup")),
        T("B", "forum", "Newcomers", b_text("newcomer"), SORT_HINT),
        T("B", "forum", "Webinars", b_text("webinar"), SORT_HINT),
        T("C", "forum", "Announcements", c_text("official notices", "hot")),
        T("C", "forum", "Moderators", c_text("staff overseers", "latest")),
        T("C", "forum", "Meetups", c_text("in-person gatherings", "hot")),
        T("C", "forum", "Webinars", c_text("online seminars", "latest")),
        T("C", "forum", "Polls", c_text("surveys", "hot")),
        T("D", "forum", "Newcomers", d_text("fresh joiners", "hot"), SORT_HINT),
        T("D", "forum", "Webinars", d_text("video talks", "latest"), SORT_HINT),
        T("D", "forum", "Contests", d_text("competitions", "hot"), SORT_HINT),
    ]


# ---------------------------------------------------------------------------
# cms-mini: one site, 50 pages, 20 tasks (includes an order-filtering flow)

ORDER_ROWS = [
    "000000019 | Grace Nguyen | 2022-03-14 | Pending",
    "000000020 | Sarah Miller | 2022-01-30 | Canceled",
    "000000021 | John Lee | 2022-01-05 | Complete",
    "000000022 | Alex Johnson | 2022-02-11 | Complete",
    "000000023 | Maria Garcia | 2022-04-02 | Complete",
]
SEARCH_TERMS = [
    "backpack | 41 uses",
    "hoodie | 12 uses",
    "jacket | 77 uses",
    "tank top | 65 uses",
    "yoga mat | 90 uses",
]


def cms_mini_site() -> SiteDef:
    L = ListDef
    orders = L("Orders", "order", "ORD", sort_label="↑Purchase Date", rows=ORDER_ROWS)
    terms = L("Search terms", "search term", "TRM", sort_label="Sort by Uses", rows=SEARCH_TERMS)
    # search terms: the sorted view must be by uses, descending
    return SiteDef(
        "cms",
        "Store admin",
        ["Recent activity", "Latest news", "Help center"],
        [
            SectionDef("Sales", [orders, L("Invoices", "invoice", "INV"), L("Shipments", "shipment", "SHP")]),
            SectionDef("Catalog", [L("Products", "product", "SKU"), L("Categories", "category", "CAT"), L("Attributes", "attribute", "ATT")]),
            SectionDef("Customers", [L("Accounts", "account", "ACC"), L("Groups", "group", "GRP"), L("Segments", "segment", "SEG")]),
            SectionDef("Marketing", [L("Promotions", "promotion", "PRM"), L("Reviews", "review", "REV"), terms]),
            SectionDef("Reports", [L("Bestsellers", "bestseller", "BST"), L("Low stock", "low stock item", "LOW"), L("Refunds", "refund", "RFD")]),
        ],
    )


def patch_cms_mini(site_json: dict) -> None:
    """Add the order-filter flow and fix the two lists whose sorted view is not a plain reversal."""
    pages = {p["locator"]: p for p in site_json["pages"]}
    base = "sales/orders?sort=purchase-date"
    by_date = sorted(ORDER_ROWS, key=lambda r: r.split(" | ")[2])
    complete = [r for r in by_date if r.endswith("Complete")]

    def rows(rs: list[str]) -> list[dict]:
        return [el(f"r{i + 1}", "row", r) for i, r in enumerate(rs)]

    sorted_page = pages[base]
    sorted_page["elements"] = [
        el("00-title", "heading", "Orders (↑purchase date)"),
        *rows(by_date),
        el("40-filters", "button", "Filters"),
        el("50-clear-sort", "button", "Clear sort"),
        el("90-home", "link", "Home"),
    ]
    sorted_page["affordances"].append(click("40-filters", f"{base}&filters=open"))
    filter_common = [el("00-title", "heading", "Orders (↑purchase date)"), *rows(by_date), el("90-home", "link", "Home")]
    new_pages = [
        {
            "locator": f"{base}&filters=open",
            "elements": [*filter_common, el("status", "textbox", "Status"), el("apply-filters", "button", "Apply Filters")],
            "affordances": [click("status", f"{base}&filters=open&focus=status"), click("apply-filters", base), click("90-home", "home")],
        },
        {
            "locator": f"{base}&filters=open&focus=status",
            "elements": [*filter_common, el("status", "textbox", "Status", focused="true"), el("apply-filters", "button", "Apply Filters")],
            "affordances": [
                {"action_kind": "type", "element_id": "status", "mutation": {"Complete": f"{base}&filters=open&status=complete", "*": f"{base}&filters=open&status=other"}},
                click("apply-filters", base),
                click("90-home", "home"),
            ],
        },
        {
            "locator": f"{base}&filters=open&status=complete",
            "elements": [*filter_common, el("status", "textbox", "Status", value="Complete"), el("apply-filters", "button", "Apply Filters")],
            "affordances": [click("apply-filters", f"{base}&status=complete"), click("90-home", "home")],
        },
        {
            "locator": f"{base}&filters=open&status=other",
            "elements": [*filter_common, el("status", "textbox", "Status", value="?"), el("apply-filters", "button", "Apply Filters")],
            "affordances": [click("apply-filters", f"{base}&status=none"), click("90-home", "home")],
        },
        {
            "locator": f"{base}&status=none",
            "elements": [el("00-title", "heading", "Orders (filtered)"), el("10-note", "text", "No matching orders."), el("90-home", "link", "Home")],
            "affordances": [click("90-home", "home")],
        },
        {
            "locator": f"{base}&status=complete",
            "elements": [
                el("00-title", "heading", "Orders (filtered: complete)"),
                *rows(complete),
                *[el("view" if i == 0 else f"view-{i + 1}", "link", "View") for i in range(len(complete))],
                el("90-home", "link", "Home"),
            ],
            "affordances": [
                *[click("view" if i == 0 else f"view-{i + 1}", f"sales/orders/{first_cell(r)}") for i, r in enumerate(complete)],
                click("90-home", "home"),
            ],
        },
    ]
    for r in complete:
        number, name, date, status = r.split(" | ")
        new_pages.append(
            {
                "locator": f"sales/orders/{number}",
                "elements": [
                    el("00-title", "heading", f"Order # {number}"),
                    el("10-billing", "text", f"Billing Name: {name}"),
                    el("11-date", "text", f"Purchase Date: {date}"),
                    el("12-status", "text", f"Status: {status}"),
                    el("90-home", "link", "Home"),
                ],
                "affordances": [click("90-home", "home")],
            }
        )
    help_page = pages["info/help-center"]
    for i, title in enumerate(("Keyboard shortcuts", "Contact support"), 1):
        eid = f"2{i}-{slug(title)}"
        help_page["elements"].append(el(eid, "link", title))
        help_page["affordances"].append(click(eid, f"help/{slug(title)}"))
        new_pages.append(
            {
                "locator": f"help/{slug(title)}",
                "elements": [el("00-title", "heading", title), el("10-note", "text", "See the store manual."), el("90-home", "link", "Home")],
                "affordances": [click("90-home", "home")],
            }
        )
    terms_sorted = pages["marketing/search-terms?sort=uses"]
    by_uses = sorted(SEARCH_TERMS, key=lambda r: -int(r.split(" | ")[1].split()[0]))
    terms_sorted["elements"] = [e for e in terms_sorted["elements"] if e["role"] != "row"] + rows(by_uses)
    site_json["pages"] = sorted([*pages.values(), *new_pages], key=lambda p: p["locator"])


FILTER_WALKTHROUGH_QUERY = "What is the billing name of the oldest complete order?"
FILTER_WALKTHROUGH_SCRIPT = [
    Action.click("11-sales"),
    Action.click("11-orders"),
    Action.click("50-sort"),
    Action.click("40-filters"),
    Action.click("status"),
    Action.type("status", "Complete"),
    Action.click("apply-filters"),
    Action.click("view"),
    Action.stop("John Lee"),
]
WRONG_SORT_QUERY = "What is the top search term by number of uses?"
WRONG_SORT_HINT = "The rows are in alphabetical order, not by uses. Click 'Sort by Uses' and then read the first row."


def cms_mini_tasks() -> list[TaskDef]:
    T = TaskDef
    return [
        T("filter-walkthrough", "cms", "Orders", FILTER_WALKTHROUGH_QUERY),
        T("wrong-sort", "cms", "Search terms", WRONG_SORT_QUERY, WRONG_SORT_HINT),
        T("A", "cms", "Invoices", a_text("Invoices", "invoice")),
        T("A", "cms", "Products", a_text("Products", "product")),
        T("A+detour", "cms", "Reviews", a_text("Reviews", "review", "recent")),
        T("A", "cms", "Accounts", a_text("Accounts", "account")),
        T("A", "cms", "Refunds", a_text("Refunds", "refund")),
        T("A+detour", "cms", "Categories", a_text("Categories", "category", "latest")),
        T("B", "cms", "Shipments", b_text("shipment"), SORT_HINT),
        T("B", "cms", "Promotions", b_text("promotion"), SORT_HINT),
        T("B", "cms", "Bestsellers", b_text("bestseller"), SORT_HINT),
        T("B", "cms", "Groups", b_text("group"), SORT_HINT),
        T("C", "cms", "Invoices", c_text("bills", "recent")),
        T("C", "cms", "Products", c_text("merchandise items", "latest")),
        T("C", "cms", "Reviews", c_text("customer opinions", "recent")),
        T("C", "cms", "Segments", c_text("cohorts", "latest")),
        T("C", "cms", "Attributes", c_text("item properties", "help")),
        T("D", "cms", "Shipments", d_text("deliveries", "recent"), SORT_HINT),
        T("D", "cms", "Promotions", d_text("discount campaigns", "latest"), SORT_HINT),
        T("D", "cms", "Low stock", d_text("scarce inventory", "help"), SORT_HINT),
    ]


def cms_mini_task_record(site: SiteDef, t: TaskDef, task_id: str) -> dict:
    if t.kind == "filter-walkthrough":
        base = "sales/orders?sort=purchase-date"
        return {
            "query": {"id": task_id, "text": t.text, "site": "cms"},
            "key_obs": ["sales/orders", f"{base}&status=complete", "sales/orders/000000021"],
            "validator": {"kind": "answer_equals", "expected": "John Lee"},
        }
    if t.kind == "wrong-sort":
        return {
            "query": {"id": task_id, "text": t.text, "site": "cms"},
            "key_obs": ["marketing/search-terms"],
            "validator": {"kind": "answer_equals", "expected": "yoga mat"},
        }
    return task_record(site, t, task_id)


def cms_mini_rules(site: SiteDef, t: TaskDef) -> list[dict]:
    if t.kind != "filter-walkthrough":
        return task_rules(site, t)
    base = "sales/orders?sort=purchase-date"
    keys = ["sales/orders", f"{base}&status=complete", "sales/orders/000000021"]
    rules = [
        {"role": "classify_error", "verdict": "navigation_failure", "query_contains": t.text, "context_lacks": [f"[page {k}]"]}
        for k in keys
    ]
    rules.append({"role": "classify_error", "verdict": "execution_failure", "query_contains": t.text})
    rules.append({"role": "relevance", "verdict": True, "query_contains": t.text, "context_contains": ["page: sales/orders\n"]})
    rules.append({"role": "locate_first_error", "verdict": {"first_matching": "Stop action"}, "query_contains": t.text})
    return rules


# ---------------------------------------------------------------------------
# Taxonomy suite: success / navigation / execution variant per cms-mini task


def taxonomy_suite(world_json: dict) -> dict:
    world = parse_world(world_json, "cms-mini")
    site = world.sites["cms"]
    items = []
    for task in world.tasks:
        if task.query.text == FILTER_WALKTHROUGH_QUERY:
            solution = list(FILTER_WALKTHROUGH_SCRIPT)
        else:
            solution = find_solution(world, task)
            assert solution is not None, task.id
        wrong = "not available" if solution[-1].payload != "not available" else "n/a"
        variants = {
            "success": solution,
            # enters a decoy page and gives up: never sees the key pages
            "navigation_failure": [Action.click("01-recent-activity"), Action.click("90-home"), Action.stop(wrong)],
            # walks the whole correct route, then answers wrongly
            "execution_failure": [*solution[:-1], Action.stop(wrong)],
        }
        if task.query.text.startswith("Which of the") or task.query.text.startswith("Among"):
            # get lost inside the right site area instead of a decoy
            variants["navigation_failure"] = [solution[0], Action.click("90-home"), Action.stop(wrong)]
        for label, actions in variants.items():
            traj = replay(site, actions, task.id)
            items.append({"task_id": task.id, "label": label, "actions": [a.to_dict() for a in actions], "trajectory": traj.to_dict()})
            got = label_episode(task, traj)
            assert got.value == label, (task.id, label, got)
    return {"schema": 1, "world": "cms-mini", "items": items}


# ---------------------------------------------------------------------------


def build(sites: list[SiteDef], tasks: list[TaskDef], world_id: str, record=task_record, rules_for=task_rules, patch=None) -> tuple[dict, dict]:
    by_id = {s.site_id: s for s in sites}
    site_json = [build_site(s) for s in sites]
    if patch:
        patch(site_json[0])
    counters: dict[str, int] = {}
    records, rules = [], []
    for t in tasks:
        counters[t.site] = counters.get(t.site, 0) + 1
        task_id = f"{t.site}-{counters[t.site]:02d}"
        records.append(record(by_id[t.site], t, task_id))
        rules.extend(rules_for(by_id[t.site], t))
    world = {"schema": 1, "world_id": world_id, "sites": site_json, "tasks": records}
    oracle = {"schema": 1, "defaults": {}, "rules": rules}
    return world, oracle


def check_queries(tasks: list[TaskDef]) -> None:
    emb = Embedder()
    texts = [t.text for t in tasks]
    assert len(set(texts)) == len(texts), "duplicate query"
    for i, a in enumerate(tasks):
        for b in tasks[i + 1:]:
            assert a.text not in b.text and b.text not in a.text, (a.text, b.text)
            if a.site == b.site:
                sim = cosine(emb.embed(a.text), emb.embed(b.text))
                assert sim < 0.95, (a.text, b.text, sim)


EXPECTED_BASE = {
    "A": FailureLabel.SUCCESS,
    "A+detour": FailureLabel.SUCCESS,
    "B": FailureLabel.EXECUTION,
    "wrong-sort": FailureLabel.EXECUTION,
    "C": FailureLabel.NAVIGATION,
    "D": FailureLabel.NAVIGATION,
}


def check_base_policy(world_json: dict, tasks: list[TaskDef], world_id: str) -> None:
    world = parse_world(world_json, world_id)
    policy = ScriptedPolicy()
    for spec, t in zip(world.tasks, tasks):
        assert find_solution(world, spec) is not None or t.kind == "filter-walkthrough", spec.id
        if t.kind not in EXPECTED_BASE:
            continue
        traj = run_episode(world, spec, policy, (), 30)
        label = label_episode(spec, traj)
        want = EXPECTED_BASE[t.kind]
        assert label is want, (spec.id, t.kind, t.text, label, traj.render())
        if t.kind == "A+detour":
            assert traj.horizon == 5, (spec.id, traj.render())
        if t.kind == "A":
            assert traj.horizon == 3, (spec.id, traj.render())


def write(path: Path, obj: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, ensure_ascii=False, sort_keys=True) + "\n", encoding="utf-8")


def main() -> None:
    sites, tasks = bench_sites(), bench_tasks()
    check_queries(tasks)
    bench_world, bench_oracle = build(sites, tasks, "bench")
    check_base_policy(bench_world, tasks, "bench")
    world = parse_world(bench_world, "bench")
    assert world.page_count() >= 150 and len(world.sites) >= 3 and len(world.tasks) == 40

    mini_tasks = cms_mini_tasks()
    check_queries(mini_tasks)
    mini_world, mini_oracle = build(
        [cms_mini_site()], mini_tasks, "cms-mini", record=cms_mini_task_record, rules_for=cms_mini_rules, patch=patch_cms_mini
    )
    check_base_policy(mini_world, mini_tasks, "cms-mini")
    mini = parse_world(mini_world, "cms-mini")
    assert mini.page_count() == 50, mini.page_count()
    assert len(mini.tasks) == 20
    walkthrough = replay(mini.sites["cms"], FILTER_WALKTHROUGH_SCRIPT, "cms-01")
    assert walkthrough.horizon == 9 and walkthrough.final_answer() == "John Lee"

    suite = taxonomy_suite(mini_world)
    assert len(suite["items"]) == 60

    write(DATA / "worlds" / "bench.json", bench_world)
    write(DATA / "oracles" / "bench.json", bench_oracle)
    write(DATA / "worlds" / "cms-mini.json", mini_world)
    write(DATA / "oracles" / "cms-mini.json", mini_oracle)
    write(DATA / "suites" / "taxonomy60.json", suite)
    print(f"bench: {world.page_count()} pages, {len(world.tasks)} tasks; cms-mini: {mini.page_count()} pages, {len(mini.tasks)} tasks")


if __name__ == "__main__":
    main()
