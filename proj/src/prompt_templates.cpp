#include "faithtag/prompt_tagger.hpp"

namespace faithtag::prompt {

namespace {

PromptTemplate with_examples(std::string system, std::vector<PromptExample> examples) {
  return PromptTemplate{std::move(system), std::move(examples)};
}

const PromptTemplate& prompt2() {
  static const PromptTemplate t = with_examples(R"ft(Below is a dialog between people and its summary. At the end of summary there is an extra '<EOS>' token. Your task is identify how much the summary is hallucinated. The output should be token by token classification whether its hallucinated or not. Following are the available hallucination classification labels for each token. O : Not Hallucinated, W: Wrong person reference, C: circumstancial error, OB: Object error, N: uncommon error like tense errors. At the end you have to identify if there is any missing information in the summary. For the '<EOS>', the possible labels are either 'M' if the summary has missed any information from the dialog else 'O'.  Remember to tag punctuations and not remove them.

Example 1:
Dialogue --
Jesse : I have an idea that'll cheer u up !
Melvin : What is it ?
Jesse : I was thinking about doing something 4 the less fortunate this year .
Lee : Gr8 idea ! Anything in mind ?
Maxine : So no presents 4 me ? : (
Jesse : U'll get ur presents , no worries ; )
Maxine : Phew ! Was getting a bit worried for a moment ; )
Melvin : Bt what do u have in store ?
Jesse : Well , have u heard about the Refuge ?
Lee : No . What's that ?
Melvin : That's the Christmas foundation to help women and children ?
Maxine : I think I've heard of them . So what about them ?
Jesse : That's right ! They help women and children who escape from abuse . And every year they post wish lists of such ppl online and I thought that we could choose one and chip in .
Melvin : That's a great idea !
Lee : Count me in !
Maxine : Me too .
Jesse : Have a look at these 3 lists : [FILES]
Lee : I think the second one would be the easiest to arrange .
Maxine : Agree .
Melvin : What about number 3 ? A bit ambitious , but if we pull together , we'll manage .
Jesse : Actually , I'm in for the 3rd one .
Maxine : I think the 2nd list would be better . The items cos more or less the same and we can easily divide it .
Melvin : But if we agree to chip in the same amount of money , we can deal with the 3rd one easily .
Lee : Come to think of it , the 3rd one is not that bad . A bit of planning and logistics and were good to go .
Jesse : So it's settled ?
Melvin : Yup .
Lee : Sure .
Maxine : Fine .


Summary:
Jesse , Lee and Maxine will chip in for the Refuge , a Christmas foundation for women and children who escape from abuse . <EOS>

Tags: Jesse(O) ,(O) Lee(O) and(O) Maxine(O) will(O) chip(O) in(O) for(O) the(O) Refuge(O) ,(O) a(O) Christmas(O) foundation(O) for(O) women(O) and(O) children(O) who(O) escape(O) from(O) abuse(O) .(O) <EOS>(O)

Example 2:
Dialogue --
Ernest : hey Mike , did you park your car on our street ?
Mike : no , took it into garage today
Ernest : ok good
Mike : why ?
Ernest : someone just crashed into a red honda looking just like yours
Mike : lol lucky me
Summary:
Mike's car has been damaged beyond repair after being hit by another car . <EOS>

Tags: Mike's(W) car(O) has(O) been(O) damaged(O) beyond(C) repair(C) after(O) being(O) hit(O) by(O) another(O) car(O) .(O) <EOS>(M)

Looking at the example above please look at the below dialog and its summary. Analyse if the summary is hallucinated and output tags for each token in summary.)ft", {});
  return t;
}

const PromptTemplate& prompt3() {
  static const PromptTemplate t = with_examples(
      R"ft(Given a set of dialogues and its summary, the first task is to do token-level classification based on whether it is hallucinated or not. Use the following tag classes to label each token of the summary.
O = Not Hallucinated,
W =  Wrong person reference,
C = Circumstantial error,
OB = Object error,
N = uncommon errors like tense errors
M = Missing information
Once the token-level classification is done, the second task is to determine whether there is any important information from the dialogue missing in the summary. Answer 'yes' if there is any missing information else 'No'.)ft",
      {
      {R"ft(Dialogue-
"Mary: hey, im kinda broke, lend me a few box
Carter: okay, give me an hour, im at the train station
Mary: cool, thanks"

Summary- "Adam will lend Mary a box.")ft",
       R"ft(Explanation - Let's think step by step. The dialogue is about "Mary being broke and asking Carter for money.  Carter is at the train station and he will take an hour to give it to Mary". In the summary:
1. Adam is the wrong person lending the money as there is no reference of Adam in the Dialogue. It should be Carter. This is Wrong Reference (W) from the tokens described above
2. the next tokens i.e "will lend Mary a" are correct and hence each token is labeled (O) respectively
3. "box" is a slang for "money" but when summarizing no physical box is being lent. So a Wrong Object (OB) is being referenced.
4. the punctuation '.' is ok and hence (O) for it.

Tags- <TG>Adam(W) will(O) lend(O) Mary(O) a(O) box(OB) .(O)<TG>

There is important missing information that Carter will need another 1 hour to reach and lend money. Hence "Yes" for the missing information

Missing Information- <MI>Yes<MI>)ft"},
      {R"ft(Dialogue- "Ernest: hey Mike, did you park your car on our street?
Mike: no, took it into garage today
Ernest: ok good
Mike: why?
Ernest: someone just crashed into a red honda looking just like yours
Mike: lol lucky me"

Summary- "Mike took his car to the garage today because it had been hit by another car.")ft",
       R"ft(Explanation - Let's think step by step. The dialogue is about "Mike took his car into garage today. Ernest is relieved as someone had just crashed into a red Honda which looks like Mike's.". In the summary:
1. The tokens "Mike took his car to the garage today" are correct hence each token is labeled (O) respectively
2. "because" is incorrect as there is no reason and there is no corelation between him taking the car for servicing and someone elses car being hit. Its a Circumstancial Error and hence is labeled (C).
3. "it" is a wrong object reference because it refers to Mike's car which was never hit. So a Wrong Object (OB) is being referenced.
4. the next two tokens "had been" are uncommon hallucination tense errors indicating Mike took his car to the garage after the accident. Hence they iare labeled (N) respectively.
5. the remaining tokens "hit by another car." is factually correct as someone's car was hit. Hence each token is labeled (O) respectively

Tags- <TG>Mike(O) took(O) his(O) car(O) to(O) the(O) garage(O) today(O) because(C) it(OB) had(N) been(N) hit(O) by(O) another(O) car(O) .(O)<TG>

There is important missing information that Ernst is relieved as Mike's car is ok. Hence "Yes" for the missing information

Missing Information- <MI>Yes<MI>)ft"},
      {R"ft(Dialogue-
"Anne: You were right, he was lying to me :/
Irene: Oh no, what happened?
Jane: who? that Mark guy?
Anne: yeah, he told me he's 30, today I saw his passport - he's 40
Irene: You sure it's so important?
Anne: he lied to me Irene"

Summary- "Mark lied to Anne about his age. He's 40 now.")ft",
       R"ft(Explanation - Let's think step by step. The dialogue is about "Mark lied to Anne about his age. Mark is 40." . In the summary:
1. The tokens "Mark lied to Anne about his age. He's 40 now." are correct hence each token is labeled (O) respectively

Tags- <TG>Mark(O) lied(O) to(O) Anne(O) about(O) his(O) age(O) .(O) He's(O) 40(O) now(O) .(O)<TG>

There is no important missing information in the summary. Hence "No" for the missing information.

Missing Information- <MI>No<MI>)ft"}});
  return t;
}

const PromptTemplate& prompt6() {
  static const PromptTemplate t = with_examples(
      R"ft(Given a set of dialogues and its summary, the first task is to do token-level classification. Analyze each token in the summary (not the meaning of the entire sentence or phrase) and label the token based on following guidelines:
O = Not Hallucinated,
W =  Wrong person reference, only applies to humans incorrectly mentioned in the summary
C = Circumstantial error, applies in the predicate of a sentence when events or facts are completely wrong
OB = Object error, only applies to inanimate objects incorrectly mentioned in the summary
N = uncommon errors like tense errors

Once the token-level classification is done, the second task is to determine whether there is any important information from the dialogue missing in the summary. Answer 'yes' if there is any missing information else 'No'.)ft",
      {
      {R"ft(Dialogue-
"Mary: hey, im kinda broke, lend me a few box
Carter: okay, give me an hour, im at the train station
Mary: cool, thanks"

Summary- "Adam will lend Mary a box.")ft",
       R"ft(Explanation - Let's think step by step. The dialogue is about "Mary being broke and asking Carter for money.  Carter is at the train station and he will take an hour to give it to Mary". In the summary:
1. Adam is the wrong person lending the money as there is no reference of Adam in the Dialogue. It should be Carter. This is Wrong Reference (W) from the tokens described above
2. the next set of tokens [will, lend, Mary, a] are correct and hence each token is labeled (O) respectively
3. "box" is a slang for "money" but when summarizing no physical box is being lent. So a wrong object is being referenced hence (OB).
4. the punctuation '.' is ok and hence (O) for it.

Tags- <TG>Adam(W) will(O) lend(O) Mary(O) a(O) box(OB) .(O)<TG>

There is important missing information that Carter will need another 1 hour to reach and lend money. Hence "Yes" for the missing information

Missing Information- <MI>Yes<MI>)ft"},
      {R"ft(Dialogue-
"Ernest: hey Mike, did you park your car on our street?
Mike: no, took it into garage today
Ernest: ok good
Mike: why?
Ernest: someone just crashed into a red honda looking just like yours
Mike: lol lucky me"

Summary- "Mike took his car to the garage today because it had been hit by another car.")ft",
       R"ft(Explanation - Let's think step by step. The dialogue is about "Mike took his car into garage today. Ernest is relieved as someone had just crashed into a red Honda which looks like Mike's.". In the summary:
1. The set of tokens [Mike, took, his, car, to, the, garage, today] are correct hence each token is labeled (O) respectively
2. "because" is incorrect as there is no reason and there is no corelation between him taking the car for servicing and someone elses car being hit. Its a Circumstancial Error and hence is labeled (C).
3. "it" is a wrong object reference because it refers to Mike's car which was never hit. So a Wrong Object is being referenced hence (OB).
4. the next set of tokens [had,been] are uncommon hallucination tense errors indicating Mike took his car to the garage after the accident. Hence they iare labeled (N) respectively.
5. the remaining set of tokens [hit, by, another, car .] is factually correct as someone's car was hit. Hence each token is labeled (O) respectively

Tags- <TG>Mike(O) took(O) his(O) car(O) to(O) the(O) garage(O) today(O) because(C) it(OB) had(N) been(N) hit(O) by(O) another(O) car(O) .(O)<TG>

There is important missing information that Ernst is relieved as Mike's car is ok. Hence "Yes" for the missing information

Missing Information- <MI>Yes<MI>)ft"},
      {R"ft(Dialogue-
"Anne: You were right, he was lying to me :/
Irene: Oh no, what happened?
Jane: who? that Mark guy?
Anne: yeah, he told me he's 30, today I saw his passport - he's 40
Irene: You sure it's so important?
Anne: he lied to me Irene"

Summary- "Mark lied to Anne about his age. He's 40 now.")ft",
       R"ft(Explanation - Let's think step by step. The dialogue is about "Mark lied to Anne about his age. Mark is 40." . In the summary:
1. The set of tokens [Mark, lied, to, Anne, about, his, age, ., He's, 40, now, .] are correct hence each token is labeled (O) respectively

Tags- <TG>Mark(O) lied(O) to(O) Anne(O) about(O) his(O) age(O) .(O) He's(O) 40(O) now(O) .(O)<TG>

There is no important missing information in the summary. Hence "No" for the missing information.

Missing Information- <MI>No<MI>)ft"}});
  return t;
}

const PromptTemplate& prompt8() {
  static const PromptTemplate t = with_examples(
      R"ft(Given a set of dialogues and its summary, the first task is to do token-level classification. Analyze each token in the summary (not the meaning of the entire sentence or phrase) and label the token based on following guidelines:
O = Not Hallucinated,
W =  Wrong person reference, only applies to humans incorrectly mentioned in the summary
C = Circumstantial error, applies in the predicate of a sentence when events or facts are completely wrong
OB = Object error, only applies to inanimate objects incorrectly mentioned in the summary
N = uncommon errors like tense errors

Once the token-level classification is done, the second task is to determine whether there is any important information from the dialogue missing in the summary. Answer 'yes' if there is any missing information else 'No'.)ft",
      {
      {R"ft(Dialogue-
"Mary: hey, im kinda broke, lend me a few box
Carter: okay, give me an hour, im at the train station
Mary: cool, thanks"

Summary- "Adam will lend Mary a box.")ft",
       R"ft(Tags- <TG>Adam(W) will(O) lend(O) Mary(O) a(O) box(OB) .(O)<TG>

Missing Information- <MI>Yes<MI>)ft"},
      {R"ft(Dialogue-
"Ernest: hey Mike, did you park your car on our street?
Mike: no, took it into garage today
Ernest: ok good
Mike: why?
Ernest: someone just crashed into a red honda looking just like yours
Mike: lol lucky me"

Summary- "Mike took his car to the garage today because it had been hit by another car.")ft",
       R"ft(Tags- <TG>Mike(O) took(O) his(O) car(O) to(O) the(O) garage(O) today(O) because(C) it(OB) had(N) been(N) hit(O) by(O) another(O) car(O) .(O)<TG>

Missing Information- <MI>Yes<MI>)ft"},
      {R"ft(Dialogue-
"Anne: You were right, he was lying to me :/
Irene: Oh no, what happened?
Jane: who? that Mark guy?
Anne: yeah, he told me he's 30, today I saw his passport - he's 40
Irene: You sure it's so important?
Anne: he lied to me Irene"

Summary- "Mark lied to Anne about his age. He's 40 now.")ft",
       R"ft(Tags- <TG>Mark(O) lied(O) to(O) Anne(O) about(O) his(O) age(O) .(O) He's(O) 40(O) now(O) .(O)<TG>

Missing Information- <MI>No<MI>)ft"}});
  return t;
}

const PromptTemplate& prompt9() {
  static const PromptTemplate t = with_examples(
      R"ft(Given a set of dialogues and its summary, the first task is to do token-level classification. Analyze each token in the summary (not the meaning of the entire sentence or phrase) and label each token based on following guidelines:
O = Not Hallucinated
W =  Wrong person reference, only applies to tokens mentioning humans not present in the dialogue or in cases where the actions taken in the summary sentence are as per the dialogue but by the wrong human.
C = Circumstantial error, applies in the predicate of a sentence when events or facts mentioned in the summary are completely wrong as they never were mentioned in the dialogue.
OB = Object error, only applies to inanimate objects incorrectly mentioned in the summary because a different object is mentioned in the dialogue for similar context.
N = uncommon errors like tense errors

Once the token-level classification is done, the second task is to determine whether there is any important information from the dialogue missing in the summary. Answer 'yes' if there is any missing information else 'No'.)ft",
      {
      {R"ft(Dialogue- "Mary: hey, im kinda broke, lend me a few box
Carter: okay, give me an hour, im at the train station
Mary: cool, thanks"

Summary- "Adam will lend Mary a box.")ft",
       R"ft(Tags- <TG>Adam(W) will(O) lend(O) Mary(O) a(O) box(OB) .(O)<TG>

There is important missing information that Carter will need another 1 hour to reach and lend money. Hence "Yes" for the missing information

Missing Information- <MI>Yes<MI>)ft"},
      {R"ft(Dialogue- "Ernest: hey Mike, did you park your car on our street?
Mike: no, took it into garage today
Ernest: ok good
Mike: why?
Ernest: someone just crashed into a red honda looking just like yours
Mike: lol lucky me"

Summary- "Mike took his car to the garage today because it had been hit by another car.")ft",
       R"ft(Tags- <TG>Mike(O) took(O) his(O) car(O) to(O) the(O) garage(O) today(O) because(C) it(OB) had(N) been(N) hit(O) by(O) another(O) car(O) .(O)<TG>

There is important missing information that Ernst is relieved as Mike's car is ok. Hence "Yes" for the missing information

Missing Information- <MI>Yes<MI>)ft"},
      {R"ft(Dialogue- "Anne: You were right, he was lying to me :/
Irene: Oh no, what happened?
Jane: who? that Mark guy?
Anne: yeah, he told me he's 30, today I saw his passport - he's 40
Irene: You sure it's so important?
Anne: he lied to me Irene"

Summary- "Mark lied to Anne about his age. He's 40 now.")ft",
       R"ft(Tags- <TG>Mark(O) lied(O) to(O) Anne(O) about(O) his(O) age(O) .(O) He's(O) 40(O) now(O) .(O)<TG>

There is no important missing information in the summary. Hence "No" for the missing information.

Missing Information- <MI>No<MI>)ft"}});
  return t;
}

}  // namespace

const PromptTemplate& tagging_template(PromptVariant v) {
  switch (v) {
    case PromptVariant::Tagging2:
      return prompt2();
    case PromptVariant::Tagging3:
      return prompt3();
    case PromptVariant::Tagging6:
      return prompt6();
    case PromptVariant::Tagging8:
      return prompt8();
    case PromptVariant::Tagging9:
      return prompt9();
    default:
      throw UnknownVariant(std::string(variant_name(v)) + " is not a tagging prompt");
  }
}

}  // namespace faithtag::prompt
