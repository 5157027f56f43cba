#include "mils/prompts.hpp"

namespace mils {

namespace {

constexpr std::string_view kCaptionImageBody = R"tmpl(You need to provide a short image description.
I am providing to you a list of short image descriptions and scores.
Higher score means that the image description characterizes the image better:

{descriptions}

Generate additional {requested_number} short image descriptions that you think that will maximize the score and fully capture the image.
Be concrete and try to find elements that are unique to this image.
You can introduce new elements to the descriptions, combine unique elements and objects from provided descriptions to form new descriptions, rephrase individual descriptions, drop elements, or simplify descriptions.
Be creative and don't be afraid to come up with erroneous descriptions. Put each description in a different line, with a counter at the beginning (e.g. "1. ..."), and try to keep them very short (up to 10 words).)tmpl";

constexpr std::string_view kCaptionVideoBody = R"tmpl(You need to provide a short video description.
I am providing to you a list of short video descriptions and scores.
Higher score means that the video description characterizes the video better:

{descriptions}

Generate additional {requested_number} short video descriptions that you think that will maximize the score and fully capture the video.
Be concrete and try to find elements that are unique to this video.
You can introduce new elements to the descriptions, combine unique elements and objects from provided descriptions to form new descriptions, rephrase individual descriptions, drop elements, or simplify descriptions.
Be creative and don't be afraid to come up with erroneous descriptions. Put each description in a different line, with a counter at the beginning (e.g."1. ..."), and try to keep them short up to 20-25 words.)tmpl";

constexpr std::string_view kCaptionAudioBody = R"tmpl(You need to provide a short audio description.
I am providing to you a list of audio descriptions and scores.
Higher score means that the audio description characterizes the audio better:

{descriptions}

Generate additional {requested_number} short audio descriptions that you think that will maximize the score and fully capture the audio.
Be concrete and try to find elements that are unique to this audio.
You can introduce new elements to the descriptions, combine unique elements and objects from provided descriptions to form new descriptions, rephrase individual descriptions, drop elements, or simplify descriptions.
Be creative and don't be afraid to come up with erroneous descriptions. Put each description in a different line, with a counter at the beginning (e.g. "1. ..."), and try to keep them short (under 20 words).)tmpl";

constexpr std::string_view kT2iEnhanceBody = R"tmpl(You need to expand and rephrase the provided description for image generation to make the best image, by maximizing the image score:
The description is: {init_description}

Here are some example rephrases and the corresponding image scores:

{descriptions}

Generate additional {requested_number} descriptions that will maximize the score. Be concrete and come up with different descriptions with various guesses for the possible way to rephrase and expand it, in a way that will maximize the score.
You can introduce new elements to the descriptions, combine unique elements and phrasings from provided descriptions to form new ones, drop description parts, or simplify them.
Be creative and don't be afraid to come up with erroneous descriptions. Put each instruction in a different line, with a counter at the beginning (e.g. "1. ..."), and keep them short (less than 77 words).)tmpl";

constexpr std::string_view kStyleTransferBody = R"tmpl(You need to generate instructions for image editing that minimize a pair of scores:
I am providing you a list of example editing instructions and their pairs of scores.

{descriptions}

Generate additional {requested_number} editing instructions. Be concrete and come up with different instructions with various guesses for the possible edits that will minimize both of the scores.
You can introduce new styles to the instructions, combine unique styles and textures from provided instructions to form new instructions, rephrase individual instructions, drop instruction parts, or simplify them.
Be creative and don't be afraid to come up with erroneous editing instructions. Put each instruction in a different line, with a counter at the beginning (e.g. "1. ..."), and keep them short (less than 50 words).)tmpl";

constexpr std::string_view kCrossModalArithmeticBody = R"tmpl(I have an image description and an audio description that I want to combine together into a text description that will help an AI imagine that scene. As an example, if the caption says "Crane on a grass" and the audio says "An ocean with the waves crashing on shore" then you need to generate a text description like "Crane beside the shore with waves coming". The combinations can be imaginative and not necessarily true in real world.
Here are the captions and the audio description:
Image caption: {image_caption}
Audio caption: {audio_caption}
Generate the combined caption in a single sentence.)tmpl";

constexpr std::string_view kBootstrapAudioBody = R"tmpl(Generate 50 diverse descriptive captions for an audio clip that features the sound of {class_label}. Write a concise and vivid description of what can be heard in the clip, using complete sentences. For example:

1. A car drives by with its horn honking.

2. Children are playing and laughing in a park.

3. Heavy rain falls on pavement and roofs.

4. A crowd cheers and applauds at a sports event.

Write the generation as if a person would write that after listening to the audio clip. Do not mention concepts that cannot be heard, like sunshine, star, any color or taste.
Try to capture the main sounds and any background or accompanying noises in your caption, without referencing the fact that you're listening to an audio clip. Simply describe what can be heard.
Put each description in a different line, with a counter at the beginning (e.g. '1. ...'), don’t explain why, and don’t combine two different concepts (with 'or' or 'and'), and keep it short 15-20 words.)tmpl";

}  // namespace

const std::map<std::string, PromptTemplate, std::less<>>& builtin_templates() {
  static const auto* store = [] {
    auto* m = new std::map<std::string, PromptTemplate, std::less<>>();
    auto add = [m](std::string_view name, std::string_view body) {
      m->emplace(std::string(name), PromptTemplate(std::string(name), std::string(body)));
    };
    add(templates::kCaptionImage, kCaptionImageBody);
    add(templates::kCaptionVideo, kCaptionVideoBody);
    add(templates::kCaptionAudio, kCaptionAudioBody);
    add(templates::kT2iEnhance, kT2iEnhanceBody);
    add(templates::kStyleTransfer, kStyleTransferBody);
    add(templates::kCrossModalArithmetic, kCrossModalArithmeticBody);
    add(templates::kBootstrapAudio, kBootstrapAudioBody);
    return m;
  }();
  return *store;
}

}  // namespace mils
